#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <Eigen/Core>

#include "styleap/embedder.hpp"
#include "styleap/types.hpp"

namespace styleap {

enum class Metric : std::uint8_t { Cosine = 0, L2 = 1 };

const char* to_string(Metric m) noexcept;
Metric parse_metric(const std::string& name);

using KeyMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Distance used by every search path. Cosine: 1 - cos(key, query).
/// L2: squared Euclidean distance.
float distance(Metric metric, const Eigen::Ref<const Eigen::RowVectorXf>& key, float key_norm,
               const Eigen::VectorXf& query, float query_norm);

struct Hit {
  std::size_t id;
  std::string value;
  float distance;
};

struct QueryResult {
  std::vector<Hit> hits;   // ascending distance, ties by smaller id
  bool exhaustive = true;  // false when an approximate index answered
  bool short_result = false;  // fewer than k entries were available
};

/// Inverted-file index: entries bucketed by nearest centroid; a query scans
/// the nprobe lists whose centroids are closest.
struct IvfIndex {
  KeyMatrix centroids;  // k_c x d
  std::vector<std::vector<std::uint32_t>> lists;
  std::size_t nprobe = 1;

  std::size_t size() const noexcept { return lists.size(); }
};

class Datastore {
 public:
  /// One entry per corpus sentence, in corpus order.
  static Datastore build(const StyledCorpus& corpus, const EmbeddingProvider& provider,
                         Metric metric = Metric::Cosine);
  static Datastore from_vectors(std::string style_id, Metric metric, KeyMatrix keys,
                                std::vector<std::string> values);

  /// k nearest entries excluding exclude_ids. Uses the attached IVF index when
  /// present, exhaustive scan otherwise.
  QueryResult query(const SentenceVector& h, std::size_t k = 1,
                    const std::unordered_set<std::size_t>& exclude_ids = {}) const;
  QueryResult query_exact(const SentenceVector& h, std::size_t k = 1,
                          const std::unordered_set<std::size_t>& exclude_ids = {}) const;
  QueryResult query_ivf(const SentenceVector& h, std::size_t k = 1,
                        const std::unordered_set<std::size_t>& exclude_ids = {}) const;

  void attach_index(IvfIndex index);
  void detach_index() { index_.reset(); }
  void set_nprobe(std::size_t nprobe);
  const std::optional<IvfIndex>& index() const noexcept { return index_; }

  std::size_t size() const noexcept { return values_.size(); }
  Eigen::Index dimension() const noexcept { return keys_.cols(); }
  Metric metric() const noexcept { return metric_; }
  const std::string& style_id() const noexcept { return style_id_; }
  const std::string& value(std::size_t id) const { return values_.at(id); }
  const std::vector<std::string>& values() const noexcept { return values_; }
  const KeyMatrix& keys() const noexcept { return keys_; }
  float key_norm(std::size_t id) const { return norms_.at(id); }

  /// Ids of entries whose value equals text (used for self-exclusion).
  std::vector<std::size_t> ids_with_value(const std::string& text) const;

  std::string serialize() const;
  static Datastore deserialize(std::string_view bytes);
  void save(const std::string& path) const;
  static Datastore load(const std::string& path);
  /// CRC32 of the serialized form.
  std::uint32_t checksum() const;

  bool operator==(const Datastore& o) const;

 private:
  Datastore() = default;
  void reindex();
  void check_query(const SentenceVector& h, std::size_t k) const;
  QueryResult finish(std::vector<std::pair<float, std::size_t>>& cand, std::size_t k,
                     std::size_t available, bool exhaustive) const;

  std::string style_id_;
  Metric metric_ = Metric::Cosine;
  KeyMatrix keys_;
  std::vector<float> norms_;
  std::vector<std::string> values_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_value_;
  std::optional<IvfIndex> index_;
};

/// k-means (k-means++ seeding, Lloyd iterations) over the store's keys.
/// Cosine stores use spherical k-means. Throws Error(Config) when k_c is 0 or
/// exceeds the store size, or nprobe is not in [1, k_c].
IvfIndex build_ivf(const Datastore& store, std::size_t k_c, std::size_t iters, std::uint64_t seed,
                   std::size_t nprobe = 1);

inline constexpr std::uint32_t kDatastoreVersion = 1;

}  // namespace styleap
