#include "styleap/datastore.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <random>

#include "styleap/binary_io.hpp"
#include "styleap/error.hpp"
#include "styleap/text.hpp"

namespace styleap {

namespace {

using binio::put;
using binio::put_string;
using binio::Reader;

constexpr char kMagic[8] = {'S', 'T', 'Y', 'L', 'A', 'P', 'D', 'S'};

bool hit_less(const std::pair<float, std::size_t>& a, const std::pair<float, std::size_t>& b) {
  return a.first != b.first ? a.first < b.first : a.second < b.second;
}

}  // namespace

const char* to_string(Metric m) noexcept { return m == Metric::Cosine ? "cosine" : "l2"; }

Metric parse_metric(const std::string& name) {
  if (name == "cosine") return Metric::Cosine;
  if (name == "l2") return Metric::L2;
  throw Error(ErrorKind::Config, "unknown metric '" + name + "' (expected cosine or l2)");
}

float distance(Metric metric, const Eigen::Ref<const Eigen::RowVectorXf>& key, float key_norm,
               const Eigen::VectorXf& query, float query_norm) {
  if (metric == Metric::L2) return (key - query.transpose()).squaredNorm();
  if (key_norm == 0.0f || query_norm == 0.0f) return 1.0f;
  const float c = key.dot(query.transpose()) / (key_norm * query_norm);
  return 1.0f - std::clamp(c, -1.0f, 1.0f);
}

Datastore Datastore::build(const StyledCorpus& corpus, const EmbeddingProvider& provider, Metric metric) {
  if (corpus.sentences.empty()) {
    throw Error(ErrorKind::Config, "cannot build a datastore from empty corpus '" + corpus.style_id + "'");
  }
  KeyMatrix keys(static_cast<Eigen::Index>(corpus.sentences.size()), provider.dimension());
  std::vector<std::string> values;
  values.reserve(corpus.sentences.size());
  for (std::size_t i = 0; i < corpus.sentences.size(); ++i) {
    const auto v = provider.embed(corpus.sentences[i]);
    keys.row(static_cast<Eigen::Index>(i)) = v.values().transpose();
    values.push_back(corpus.sentences[i].text);
  }
  return from_vectors(corpus.style_id, metric, std::move(keys), std::move(values));
}

Datastore Datastore::from_vectors(std::string style_id, Metric metric, KeyMatrix keys,
                                  std::vector<std::string> values) {
  if (static_cast<std::size_t>(keys.rows()) != values.size()) {
    throw Error(ErrorKind::Config, "datastore: key/value count mismatch");
  }
  if (!keys.allFinite()) throw Error(ErrorKind::Config, "datastore: non-finite key component");
  Datastore store;
  store.style_id_ = std::move(style_id);
  store.metric_ = metric;
  store.keys_ = std::move(keys);
  store.values_ = std::move(values);
  store.reindex();
  return store;
}

void Datastore::reindex() {
  norms_.resize(values_.size());
  by_value_.clear();
  for (std::size_t i = 0; i < values_.size(); ++i) {
    norms_[i] = keys_.row(static_cast<Eigen::Index>(i)).norm();
    by_value_[values_[i]].push_back(i);
  }
}

std::vector<std::size_t> Datastore::ids_with_value(const std::string& text) const {
  auto it = by_value_.find(text);
  return it == by_value_.end() ? std::vector<std::size_t>{} : it->second;
}

void Datastore::check_query(const SentenceVector& h, std::size_t k) const {
  if (h.dim() != dimension()) {
    throw Error(ErrorKind::Dimension, "query dimension " + std::to_string(h.dim()) +
                                          " does not match datastore dimension " + std::to_string(dimension()));
  }
  if (k == 0) throw Error(ErrorKind::Config, "query: k must be at least 1");
}

QueryResult Datastore::finish(std::vector<std::pair<float, std::size_t>>& cand, std::size_t k,
                              std::size_t available, bool exhaustive) const {
  const std::size_t take = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), hit_less);
  QueryResult r;
  r.exhaustive = exhaustive;
  r.short_result = available < k;
  r.hits.reserve(take);
  for (std::size_t i = 0; i < take; ++i) r.hits.push_back(Hit{cand[i].second, values_[cand[i].second], cand[i].first});
  return r;
}

QueryResult Datastore::query(const SentenceVector& h, std::size_t k,
                             const std::unordered_set<std::size_t>& exclude_ids) const {
  return index_ ? query_ivf(h, k, exclude_ids) : query_exact(h, k, exclude_ids);
}

QueryResult Datastore::query_exact(const SentenceVector& h, std::size_t k,
                                   const std::unordered_set<std::size_t>& exclude_ids) const {
  check_query(h, k);
  std::vector<std::pair<float, std::size_t>> cand;
  cand.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    if (exclude_ids.count(i)) continue;
    cand.emplace_back(distance(metric_, keys_.row(static_cast<Eigen::Index>(i)), norms_[i], h.values(), h.norm()), i);
  }
  const std::size_t available = cand.size();
  return finish(cand, k, available, true);
}

QueryResult Datastore::query_ivf(const SentenceVector& h, std::size_t k,
                                 const std::unordered_set<std::size_t>& exclude_ids) const {
  if (!index_) return query_exact(h, k, exclude_ids);
  check_query(h, k);
  const IvfIndex& ix = *index_;
  std::vector<std::pair<float, std::size_t>> cdist;
  cdist.reserve(ix.size());
  for (std::size_t c = 0; c < ix.size(); ++c) {
    const auto row = ix.centroids.row(static_cast<Eigen::Index>(c));
    cdist.emplace_back(distance(metric_, row, row.norm(), h.values(), h.norm()), c);
  }
  const std::size_t probe = std::min(ix.nprobe, ix.size());
  std::partial_sort(cdist.begin(), cdist.begin() + static_cast<std::ptrdiff_t>(probe), cdist.end(), hit_less);

  std::vector<std::pair<float, std::size_t>> cand;
  for (std::size_t p = 0; p < probe; ++p) {
    for (std::uint32_t id : ix.lists[cdist[p].second]) {
      if (exclude_ids.count(id)) continue;
      cand.emplace_back(distance(metric_, keys_.row(id), norms_[id], h.values(), h.norm()), id);
    }
  }
  std::size_t available = size();
  for (std::size_t id : exclude_ids) available -= (id < size()) ? 1 : 0;
  return finish(cand, k, available, probe == ix.size());
}

void Datastore::attach_index(IvfIndex index) {
  std::vector<int> seen(size(), 0);
  for (const auto& list : index.lists) {
    for (auto id : list) {
      if (id >= size() || seen[id]++) throw Error(ErrorKind::Config, "ivf index does not partition the store");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) {
    throw Error(ErrorKind::Config, "ivf index does not cover every entry");
  }
  if (index.centroids.cols() != dimension() || static_cast<std::size_t>(index.centroids.rows()) != index.lists.size()) {
    throw Error(ErrorKind::Dimension, "ivf centroid shape does not match datastore");
  }
  if (index.nprobe < 1 || index.nprobe > index.size()) throw Error(ErrorKind::Config, "nprobe must be in [1, k_c]");
  index_ = std::move(index);
}

void Datastore::set_nprobe(std::size_t nprobe) {
  if (!index_) throw Error(ErrorKind::Config, "set_nprobe: no index attached");
  if (nprobe < 1 || nprobe > index_->size()) throw Error(ErrorKind::Config, "nprobe must be in [1, k_c]");
  index_->nprobe = nprobe;
}

IvfIndex build_ivf(const Datastore& store, std::size_t k_c, std::size_t iters, std::uint64_t seed,
                   std::size_t nprobe) {
  const std::size_t n = store.size();
  if (k_c == 0 || k_c > n) {
    throw Error(ErrorKind::Config, "build_ivf: k_c=" + std::to_string(k_c) + " must be in [1, " + std::to_string(n) + "]");
  }
  if (nprobe < 1 || nprobe > k_c) throw Error(ErrorKind::Config, "build_ivf: nprobe must be in [1, k_c]");

  const Metric metric = store.metric();
  const Eigen::Index d = store.dimension();
  KeyMatrix points = store.keys();
  if (metric == Metric::Cosine) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
      const float nn = points.row(i).norm();
      if (nn > 0.0f) points.row(i) /= nn;
    }
  }
  auto dist = [&](Eigen::Index i, const KeyMatrix& cents, Eigen::Index c) {
    if (metric == Metric::L2) return (points.row(i) - cents.row(c)).squaredNorm();
    return 1.0f - points.row(i).dot(cents.row(c));
  };

  std::mt19937_64 rng(derive_seed(seed, "kmeans"));
  KeyMatrix cents(static_cast<Eigen::Index>(k_c), d);

  // k-means++ seeding.
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  cents.row(0) = points.row(static_cast<Eigen::Index>(pick(rng)));
  for (std::size_t c = 1; c < k_c; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dd = std::max(0.0f, dist(static_cast<Eigen::Index>(i), cents, static_cast<Eigen::Index>(c - 1)));
      best[i] = std::min(best[i], dd * dd);
      total += best[i];
    }
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (chosen = 0; chosen + 1 < n; ++chosen) {
        r -= best[chosen];
        if (r <= 0.0 && best[chosen] > 0.0) break;
      }
    } else {
      chosen = pick(rng);
    }
    cents.row(static_cast<Eigen::Index>(c)) = points.row(static_cast<Eigen::Index>(chosen));
  }

  std::vector<std::uint32_t> assign(n, 0);
  auto assign_all = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      float bd = std::numeric_limits<float>::infinity();
      std::uint32_t bc = 0;
      for (std::size_t c = 0; c < k_c; ++c) {
        const float dd = dist(static_cast<Eigen::Index>(i), cents, static_cast<Eigen::Index>(c));
        if (dd < bd) {
          bd = dd;
          bc = static_cast<std::uint32_t>(c);
        }
      }
      assign[i] = bc;
    }
  };

  for (std::size_t it = 0; it < iters; ++it) {
    assign_all();
    KeyMatrix sums = KeyMatrix::Zero(static_cast<Eigen::Index>(k_c), d);
    std::vector<std::size_t> counts(k_c, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(static_cast<Eigen::Index>(i));
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k_c; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      auto row = sums.row(static_cast<Eigen::Index>(c));
      if (metric == Metric::Cosine) {
        const float nn = row.norm();
        if (nn > 0.0f) cents.row(static_cast<Eigen::Index>(c)) = row / nn;
      } else {
        cents.row(static_cast<Eigen::Index>(c)) = row / static_cast<float>(counts[c]);
      }
    }
  }
  assign_all();

  IvfIndex index;
  index.centroids = std::move(cents);
  index.lists.assign(k_c, {});
  for (std::size_t i = 0; i < n; ++i) index.lists[assign[i]].push_back(static_cast<std::uint32_t>(i));
  index.nprobe = nprobe;
  return index;
}

std::string Datastore::serialize() const {
  std::string out;
  const std::size_t n = size();
  const auto d = static_cast<std::size_t>(dimension());
  out.reserve(64 + n * d * sizeof(float) + n * 32);
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kDatastoreVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(metric_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  put<std::uint64_t>(out, static_cast<std::uint64_t>(n));
  put_string(out, style_id_);
  out.append(reinterpret_cast<const char*>(keys_.data()), n * d * sizeof(float));
  for (const auto& v : values_) put_string(out, v);
  put<std::uint8_t>(out, index_ ? 1 : 0);
  if (index_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(index_->size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(index_->nprobe));
    out.append(reinterpret_cast<const char*>(index_->centroids.data()), index_->size() * d * sizeof(float));
    std::vector<std::uint32_t> owner(n, 0);
    for (std::size_t c = 0; c < index_->size(); ++c) {
      for (auto id : index_->lists[c]) owner[id] = static_cast<std::uint32_t>(c);
    }
    for (auto c : owner) put<std::uint32_t>(out, c);
  }
  put<std::uint32_t>(out, crc32(out));
  return out;
}

Datastore Datastore::deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 4) throw Error(ErrorKind::Format, "datastore: file truncated");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (crc32(body) != stored) throw Error(ErrorKind::Checksum, "datastore: checksum mismatch (file corrupt or truncated)");

  Reader r(body, "datastore");
  char magic[sizeof(kMagic)];
  for (char& c : magic) c = r.get<char>();
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error(ErrorKind::Format, "datastore: bad magic bytes");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatastoreVersion) {
    throw Error(ErrorKind::Format, "datastore: unsupported format version " + std::to_string(version));
  }
  const auto metric_tag = r.get<std::uint8_t>();
  if (metric_tag > 1) throw Error(ErrorKind::Format, "datastore: unknown metric tag");
  const auto d = r.get<std::uint32_t>();
  const auto n = r.get<std::uint64_t>();
  std::string style = r.get_string();
  if (n * d * sizeof(float) > r.remaining()) throw Error(ErrorKind::Format, "datastore: truncated key matrix");
  KeyMatrix keys(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  r.get_floats(keys.data(), n * d);
  std::vector<std::string> values;
  values.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) values.push_back(r.get_string());
  Datastore store = from_vectors(std::move(style), static_cast<Metric>(metric_tag), std::move(keys), std::move(values));
  if (r.get<std::uint8_t>()) {
    IvfIndex ix;
    const auto kc = r.get<std::uint32_t>();
    ix.nprobe = r.get<std::uint32_t>();
    ix.centroids.resize(kc, d);
    r.get_floats(ix.centroids.data(), std::size_t{kc} * d);
    ix.lists.assign(kc, {});
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto c = r.get<std::uint32_t>();
      if (c >= kc) throw Error(ErrorKind::Format, "datastore: bad inverted-list assignment");
      ix.lists[c].push_back(static_cast<std::uint32_t>(i));
    }
    store.attach_index(std::move(ix));
  }
  if (r.remaining() != 0) throw Error(ErrorKind::Format, "datastore: trailing bytes");
  return store;
}

void Datastore::save(const std::string& path) const { write_file(path, serialize()); }

Datastore Datastore::load(const std::string& path) {
  const std::string bytes = read_file(path);
  try {
    return deserialize(bytes);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

std::uint32_t Datastore::checksum() const {
  const std::string s = serialize();
  std::uint32_t c;
  std::memcpy(&c, s.data() + s.size() - 4, 4);
  return c;
}

bool Datastore::operator==(const Datastore& o) const {
  if (style_id_ != o.style_id_ || metric_ != o.metric_ || values_ != o.values_ || keys_ != o.keys_) return false;
  if (index_.has_value() != o.index_.has_value()) return false;
  if (index_) {
    return index_->centroids == o.index_->centroids && index_->lists == o.index_->lists &&
           index_->nprobe == o.index_->nprobe;
  }
  return true;
}

}  // namespace styleap
