#include "lgsgm/graphdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

#include "lgsgm/io_util.hpp"

namespace lgsgm {

using json = nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

std::size_t PairedDataset::num_captions() const {
  std::size_t n = 0;
  for (const auto& it : items) n += it.captions.size();
  return n;
}

// ---------------------------------------------------------------- vocab

Vocab::Vocab() : words_{kUnknownWord} { index_[kUnknownWord] = kUnknownId; }

std::size_t Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnknownId : it->second;
}

const std::string& Vocab::word(std::size_t id) const {
  if (id >= words_.size()) throw DataError("vocab: word id " + std::to_string(id) + " out of range");
  return words_[id];
}

std::vector<std::size_t> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Vocab build_vocab(std::span<const std::vector<std::string>> captions, std::size_t threshold) {
  if (threshold == 0) throw ConfigError("build_vocab: threshold must be >= 1");
  std::map<std::string, std::size_t> freq;
  std::size_t total = 0;
  for (const auto& cap : captions) {
    for (const auto& w : cap) {
      ++freq[w];
      ++total;
    }
  }
  if (total == 0) throw DataError("build_vocab: empty corpus");
  Vocab v;
  v.threshold_ = threshold;
  // std::map iterates in lexicographic order.
  for (const auto& [w, n] : freq) {
    if (n >= threshold && w != Vocab::kUnknownWord) {
      v.index_[w] = v.words_.size();
      v.words_.push_back(w);
    }
  }
  return v;
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  json j;
  j["format_version"] = 1;
  j["unknown"] = Vocab::kUnknownWord;
  j["threshold"] = vocab.threshold();
  j["num_object_classes"] = vocab.num_object_classes;
  j["num_predicate_classes"] = vocab.num_predicate_classes;
  j["words"] = std::vector<std::string>(vocab.words().begin(), vocab.words().end());
  j["object_names"] = vocab.object_names;
  j["predicate_names"] = vocab.predicate_names;
  write_file_atomic(path, j.dump(1) + "\n");
}

Vocab load_vocab(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw DataError("vocab '" + path.string() + "': " + e.what());
  }
  try {
    Vocab v;
    auto words = j.at("words").get<std::vector<std::string>>();
    if (words.empty() || words[0] != Vocab::kUnknownWord) {
      throw DataError("vocab '" + path.string() + "': first word must be " + Vocab::kUnknownWord);
    }
    v.words_.clear();
    v.index_.clear();
    for (const auto& w : words) {
      if (v.index_.count(w)) throw DataError("vocab '" + path.string() + "': duplicate word '" + w + "'");
      v.index_[w] = v.words_.size();
      v.words_.push_back(w);
    }
    v.threshold_ = j.at("threshold").get<std::size_t>();
    v.num_object_classes = j.at("num_object_classes").get<std::size_t>();
    v.num_predicate_classes = j.at("num_predicate_classes").get<std::size_t>();
    if (j.contains("object_names")) v.object_names = j["object_names"].get<std::vector<std::string>>();
    if (j.contains("predicate_names")) v.predicate_names = j["predicate_names"].get<std::vector<std::string>>();
    return v;
  } catch (const json::exception& e) {
    throw DataError("vocab '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------- validation

void validate(const VisualGraph& g, const Vocab& vocab) {
  const std::string where = "image '" + g.id + "': ";
  if (g.objects.empty()) throw DataError(where + "no objects");
  if (g.boxes.size() != g.objects.size()) throw DataError(where + "boxes/objects length mismatch");
  if (g.feat_dim == 0) throw DataError(where + "feat_dim must be positive");
  if (g.node_feats.size() != g.objects.size() * g.feat_dim) {
    throw DataError(where + "node_feats has " + std::to_string(g.node_feats.size()) + " values, expected " +
                    std::to_string(g.objects.size() * g.feat_dim));
  }
  if (g.edge_feats.size() != g.relations.size() * g.feat_dim) {
    throw DataError(where + "edge_feats has " + std::to_string(g.edge_feats.size()) + " values, expected " +
                    std::to_string(g.relations.size() * g.feat_dim));
  }
  if (!g.object_scores.empty() && g.object_scores.size() != g.objects.size()) {
    throw DataError(where + "object_scores/objects length mismatch");
  }
  if (!g.relation_scores.empty() && g.relation_scores.size() != g.relations.size()) {
    throw DataError(where + "relation_scores/relations length mismatch");
  }
  for (std::size_t i = 0; i < g.objects.size(); ++i) {
    if (g.objects[i] >= vocab.num_object_classes) {
      throw DataError(where + "object " + std::to_string(i) + " category " + std::to_string(g.objects[i]) +
                      " >= " + std::to_string(vocab.num_object_classes));
    }
  }
  for (std::size_t r = 0; r < g.relations.size(); ++r) {
    const auto& rel = g.relations[r];
    if (rel.subject >= g.objects.size() || rel.object >= g.objects.size()) {
      throw DataError(where + "relation " + std::to_string(r) + " references node outside [0, " +
                      std::to_string(g.objects.size()) + ")");
    }
    if (rel.predicate >= vocab.num_predicate_classes) {
      throw DataError(where + "relation " + std::to_string(r) + " predicate " + std::to_string(rel.predicate) +
                      " >= " + std::to_string(vocab.num_predicate_classes));
    }
  }
  for (double v : g.node_feats)
    if (!std::isfinite(v)) throw DataError(where + "non-finite node feature");
  for (double v : g.edge_feats)
    if (!std::isfinite(v)) throw DataError(where + "non-finite edge feature");
}

void validate(const TextGraph& t, const Vocab& vocab) {
  if (t.tokens.empty()) throw DataError("caption has no tokens");
  for (std::size_t w : t.tokens) {
    if (w >= vocab.size()) throw DataError("caption word id " + std::to_string(w) + " out of vocabulary");
  }
  for (std::size_t k = 0; k < t.triplets.size(); ++k) {
    if (t.triplets[k].size() < 2) {
      throw DataError("triplet " + std::to_string(k) + " has fewer than 2 words");
    }
    for (std::size_t w : t.triplets[k]) {
      if (w >= vocab.size()) throw DataError("triplet word id " + std::to_string(w) + " out of vocabulary");
    }
  }
}

void validate(const PairedDataset& d, const Vocab& vocab) {
  for (const auto& item : d.items) {
    validate(item.image, vocab);
    if (item.captions.empty()) throw DataError("image '" + item.image.id + "' has no captions");
    for (const auto& c : item.captions) validate(c, vocab);
  }
}

// ---------------------------------------------------------------- dataset io

namespace {

json to_json(const PairedItem& item) {
  const auto& g = item.image;
  json j;
  j["id"] = g.id;
  j["feat_dim"] = g.feat_dim;
  j["objects"] = g.objects;
  json boxes = json::array();
  for (const auto& b : g.boxes) boxes.push_back({b[0], b[1], b[2], b[3]});
  j["boxes"] = boxes;
  json rels = json::array();
  for (const auto& r : g.relations) rels.push_back({r.subject, r.predicate, r.object});
  j["relations"] = rels;
  j["node_feats"] = g.node_feats;
  j["edge_feats"] = g.edge_feats;
  if (!g.object_scores.empty()) j["object_scores"] = g.object_scores;
  if (!g.relation_scores.empty()) j["relation_scores"] = g.relation_scores;
  json caps = json::array();
  for (const auto& c : item.captions) caps.push_back({{"tokens", c.tokens}, {"triplets", c.triplets}});
  j["captions"] = caps;
  return j;
}

template <typename T>
T field(const json& j, const char* name, std::size_t line) {
  if (!j.contains(name)) {
    throw DataError("line " + std::to_string(line) + ": missing field '" + name + "'");
  }
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw DataError("line " + std::to_string(line) + ": field '" + name + "': " + e.what());
  }
}

PairedItem item_from_json(const json& j, std::size_t line) {
  PairedItem item;
  auto& g = item.image;
  g.id = field<std::string>(j, "id", line);
  g.feat_dim = field<std::size_t>(j, "feat_dim", line);
  g.objects = field<std::vector<std::size_t>>(j, "objects", line);
  g.boxes = field<std::vector<std::array<double, 4>>>(j, "boxes", line);
  for (const auto& r : field<std::vector<std::array<std::size_t, 3>>>(j, "relations", line)) {
    g.relations.push_back(Relation{r[0], r[1], r[2]});
  }
  g.node_feats = field<std::vector<double>>(j, "node_feats", line);
  g.edge_feats = field<std::vector<double>>(j, "edge_feats", line);
  if (j.contains("object_scores")) g.object_scores = field<std::vector<double>>(j, "object_scores", line);
  if (j.contains("relation_scores")) g.relation_scores = field<std::vector<double>>(j, "relation_scores", line);
  const json caps = field<json>(j, "captions", line);
  if (!caps.is_array()) throw DataError("line " + std::to_string(line) + ": field 'captions': not a list");
  for (const auto& c : caps) {
    TextGraph t;
    t.tokens = field<std::vector<std::size_t>>(c, "tokens", line);
    t.triplets = field<std::vector<std::vector<std::size_t>>>(c, "triplets", line);
    item.captions.push_back(std::move(t));
  }
  return item;
}

}  // namespace

std::string dataset_to_string(const PairedDataset& dataset) {
  std::string out;
  for (const auto& item : dataset.items) {
    out += to_json(item).dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const PairedDataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, dataset_to_string(dataset));
}

PairedDataset parse_dataset(const std::string& text, const Vocab& vocab, const LoadOptions& options) {
  PairedDataset d;
  d.split = options.split;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char ch) { return std::isspace(ch); })) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    PairedItem item = item_from_json(j, line_no);
    try {
      validate(item.image, vocab);
      if (item.captions.empty()) throw DataError("no captions");
      for (const auto& c : item.captions) validate(c, vocab);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!ids.insert(item.image.id).second) {
      throw DataError("line " + std::to_string(line_no) + ": duplicate id '" + item.image.id + "'");
    }
    if (options.apply_caps) item.image = cap_graph(item.image, options.caps);
    d.items.push_back(std::move(item));
  }
  if (d.items.empty()) throw DataError("no records");
  return d;
}

PairedDataset load_dataset(const std::filesystem::path& path, const Vocab& vocab, const LoadOptions& options) {
  try {
    return parse_dataset(read_file(path), vocab, options);
  } catch (const DataError& e) {
    throw DataError("'" + path.string() + "' " + e.what());
  }
}

// ---------------------------------------------------------------- capping

namespace {

// Indices of the `cap` highest scores (ties to lower index), ascending.
std::vector<std::size_t> top_indices(std::size_t n, const std::vector<double>& scores, std::size_t cap) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (n <= cap) return order;
  if (!scores.empty()) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  }
  order.resize(cap);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

VisualGraph cap_graph(const VisualGraph& g, const CapLimits& caps) {
  const auto keep_obj = top_indices(g.objects.size(), g.object_scores, caps.objects);
  std::vector<std::ptrdiff_t> remap(g.objects.size(), -1);
  for (std::size_t i = 0; i < keep_obj.size(); ++i) remap[keep_obj[i]] = static_cast<std::ptrdiff_t>(i);

  VisualGraph out;
  out.id = g.id;
  out.feat_dim = g.feat_dim;
  for (std::size_t i : keep_obj) {
    out.objects.push_back(g.objects[i]);
    out.boxes.push_back(g.boxes[i]);
    auto f = g.node_feat(i);
    out.node_feats.insert(out.node_feats.end(), f.begin(), f.end());
    if (!g.object_scores.empty()) out.object_scores.push_back(g.object_scores[i]);
  }

  std::vector<std::size_t> alive;
  std::vector<double> alive_scores;
  for (std::size_t r = 0; r < g.relations.size(); ++r) {
    const auto& rel = g.relations[r];
    if (remap[rel.subject] < 0 || remap[rel.object] < 0) continue;
    alive.push_back(r);
    if (!g.relation_scores.empty()) alive_scores.push_back(g.relation_scores[r]);
  }
  for (std::size_t k : top_indices(alive.size(), alive_scores, caps.relations)) {
    const std::size_t r = alive[k];
    const auto& rel = g.relations[r];
    out.relations.push_back(Relation{static_cast<std::size_t>(remap[rel.subject]), rel.predicate,
                                     static_cast<std::size_t>(remap[rel.object])});
    auto f = g.edge_feat(r);
    out.edge_feats.insert(out.edge_feats.end(), f.begin(), f.end());
    if (!g.relation_scores.empty()) out.relation_scores.push_back(g.relation_scores[r]);
  }
  return out;
}

// ---------------------------------------------------------------- synthetic corpus

namespace {

const std::vector<std::string> kObjectNames = {
    "man",    "woman", "dog",      "cat",    "horse",  "bike",  "car",   "tree",  "hat",    "shirt",
    "ball",   "table", "chair",    "boy",    "girl",   "street", "building", "water", "grass", "bench",
    "bag",    "phone", "guitar",   "book",   "cup",    "window", "door",  "boat",  "bird",   "umbrella"};

const std::vector<std::string> kPredicateNames = {"on",     "holding", "wearing", "next to",   "riding",
                                                  "in front of", "behind", "near", "under", "sitting on"};

std::vector<std::string> split_words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double quantize(double v) { return std::round(v * 1e4) / 1e4; }

struct RawCaption {
  std::vector<std::string> tokens;
  std::vector<std::vector<std::string>> triplets;
};

struct RawItem {
  VisualGraph image;  // object/predicate ids are final, features filled
  std::vector<RawCaption> captions;
};

class SyntheticGenerator {
 public:
  explicit SyntheticGenerator(const SyntheticSpec& spec) : spec_(spec), rng_(spec.seed) {
    const std::size_t d = spec.image_dim;
    std::normal_distribution<double> unit(0.0, 1.0);
    object_basis_.resize(kObjectNames.size() * d);
    predicate_basis_.resize(kPredicateNames.size() * d);
    for (auto& v : object_basis_) v = unit(rng_);
    for (auto& v : predicate_basis_) v = unit(rng_);
  }

  struct Scene {
    std::vector<std::size_t> cats;  // distinct object categories
    std::vector<Relation> relations;  // indices into cats
  };

  // A fresh scene whose category set has not been used before.
  Scene make_scene() {
    Scene sc;
    for (;;) {
      const std::size_t k = pick(spec_.min_objects, spec_.max_objects);
      std::vector<std::size_t> all(kObjectNames.size());
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng_);
      sc.cats.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
      if (claim(sc.cats)) break;
    }
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t s = 0; s < sc.cats.size(); ++s)
      for (std::size_t o = 0; o < sc.cats.size(); ++o)
        if (s != o) pairs.emplace_back(s, o);
    std::shuffle(pairs.begin(), pairs.end(), rng_);
    const std::size_t n_rel = std::min(pick(spec_.min_relations, spec_.max_relations), pairs.size());
    for (std::size_t r = 0; r < n_rel; ++r) {
      sc.relations.push_back(Relation{pairs[r].first, pick(0, kPredicateNames.size() - 1), pairs[r].second});
    }
    return sc;
  }

  // `base` plus extra objects, each tied to the existing scene by one new
  // relation. Falls back to a fresh scene if no unused extension is found.
  Scene extend_scene(const Scene& base) {
    for (int attempt = 0; attempt < 64; ++attempt) {
      Scene sc = base;
      const std::size_t extra = pick(spec_.min_extra_objects, spec_.max_extra_objects);
      std::vector<std::size_t> free;
      for (std::size_t c = 0; c < kObjectNames.size(); ++c)
        if (std::find(sc.cats.begin(), sc.cats.end(), c) == sc.cats.end()) free.push_back(c);
      std::shuffle(free.begin(), free.end(), rng_);
      for (std::size_t e = 0; e < extra && e < free.size(); ++e) {
        const std::size_t anchor = pick(0, sc.cats.size() - 1);
        sc.cats.push_back(free[e]);
        const std::size_t added = sc.cats.size() - 1;
        const std::size_t p = pick(0, kPredicateNames.size() - 1);
        sc.relations.push_back(pick(0, 1) == 0 ? Relation{added, p, anchor} : Relation{anchor, p, added});
      }
      if (claim(sc.cats)) return sc;
    }
    return make_scene();
  }

  RawItem render(const Scene& sc, const std::string& id) {
    const std::size_t d = spec_.image_dim;
    std::normal_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    RawItem item;
    auto& g = item.image;
    g.id = id;
    g.feat_dim = d;
    for (std::size_t cat : sc.cats) {
      std::size_t label = cat;
      if (u01(rng_) < spec_.label_noise) label = pick(0, kObjectNames.size() - 1);
      g.objects.push_back(label);
      double x0 = quantize(u01(rng_) * 0.6), y0 = quantize(u01(rng_) * 0.6);
      g.boxes.push_back({x0, y0, quantize(x0 + 0.1 + u01(rng_) * 0.3), quantize(y0 + 0.1 + u01(rng_) * 0.3)});
      for (std::size_t j = 0; j < d; ++j) {
        g.node_feats.push_back(quantize(object_basis_[cat * d + j] + spec_.feature_noise * unit(rng_)));
      }
      g.object_scores.push_back(quantize(0.5 + 0.5 * u01(rng_)));
    }
    for (const auto& rel : sc.relations) {
      g.relations.push_back(rel);
      for (std::size_t j = 0; j < d; ++j) {
        const double latent = predicate_basis_[rel.predicate * d + j] +
                              0.5 * (object_basis_[sc.cats[rel.subject] * d + j] +
                                     object_basis_[sc.cats[rel.object] * d + j]);
        g.edge_feats.push_back(quantize(latent + spec_.feature_noise * unit(rng_)));
      }
      g.relation_scores.push_back(quantize(0.3 + 0.7 * u01(rng_)));
    }
    for (std::size_t c = 0; c < spec_.captions_per_image; ++c) {
      item.captions.push_back(make_caption(sc.cats, sc.relations));
    }
    return item;
  }

  // Images of one family: a base scene followed by supersets of it.
  std::vector<RawItem> make_items(std::size_t n, const char* prefix) {
    std::vector<RawItem> out;
    const std::size_t family = std::max<std::size_t>(1, spec_.family_size);
    Scene base;
    for (std::size_t i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof(id), "%s%04zu", prefix, i);
      base = i % family == 0 ? make_scene() : extend_scene(base);
      out.push_back(render(base, id));
    }
    return out;
  }

 private:
  std::size_t pick(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  const std::string& article() {
    static const std::vector<std::string> kArticles = {"a", "the", "one"};
    return kArticles[pick(0, kArticles.size() - 1)];
  }

  RawCaption make_caption(const std::vector<std::size_t>& cats, const std::vector<Relation>& rels) {
    RawCaption cap;
    std::vector<std::size_t> order(rels.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    const std::size_t n_mention = rels.empty() ? 0 : pick(1, rels.size());
    std::vector<bool> covered(cats.size(), false);
    for (std::size_t m = 0; m < n_mention; ++m) {
      const auto& rel = rels[order[m]];
      if (m > 0) cap.tokens.push_back("and");
      const auto& subj = kObjectNames[cats[rel.subject]];
      const auto& obj = kObjectNames[cats[rel.object]];
      const auto pred = split_words(kPredicateNames[rel.predicate]);
      cap.tokens.push_back(article());
      cap.tokens.push_back(subj);
      cap.tokens.insert(cap.tokens.end(), pred.begin(), pred.end());
      cap.tokens.push_back(article());
      cap.tokens.push_back(obj);
      std::vector<std::string> trip{subj};
      trip.insert(trip.end(), pred.begin(), pred.end());
      trip.push_back(obj);
      cap.triplets.push_back(std::move(trip));
      covered[rel.subject] = covered[rel.object] = true;
    }
    for (std::size_t i = 0; i < cats.size(); ++i) {
      if (covered[i]) continue;
      cap.tokens.push_back(cap.tokens.empty() ? "there" : "with");
      cap.tokens.push_back(article());
      cap.tokens.push_back(kObjectNames[cats[i]]);
    }
    return cap;
  }

  SyntheticSpec spec_;
  std::mt19937_64 rng_;
  std::vector<double> object_basis_;     // classes x d
  std::vector<double> predicate_basis_;  // predicates x d
  bool claim(std::vector<std::size_t> cats) {
    std::sort(cats.begin(), cats.end());
    return used_sets_.insert(std::move(cats)).second;
  }

  std::set<std::vector<std::size_t>> used_sets_;
};

PairedDataset encode_split(const std::vector<RawItem>& raw, const Vocab& vocab, Split split) {
  PairedDataset d;
  d.split = split;
  for (const auto& r : raw) {
    PairedItem item;
    item.image = r.image;
    for (const auto& rc : r.captions) {
      TextGraph t;
      t.tokens = vocab.encode(rc.tokens);
      for (const auto& trip : rc.triplets) t.triplets.push_back(vocab.encode(trip));
      item.captions.push_back(std::move(t));
    }
    d.items.push_back(std::move(item));
  }
  return d;
}

}  // namespace

std::span<const std::string> synthetic_object_names() { return kObjectNames; }
std::span<const std::string> synthetic_predicate_names() { return kPredicateNames; }

SyntheticCorpus gen_synthetic_corpus(const SyntheticSpec& spec) {
  if (spec.n_train < 2) throw ConfigError("synthetic corpus needs at least 2 training pairs");
  if (spec.image_dim == 0) throw ConfigError("synthetic corpus: image_dim must be positive");
  if (spec.captions_per_image == 0) throw ConfigError("synthetic corpus: captions_per_image must be positive");
  if (spec.min_objects < 2 || spec.max_objects < spec.min_objects || spec.max_objects > kObjectNames.size()) {
    throw ConfigError("synthetic corpus: invalid object count range");
  }
  if (spec.max_relations < spec.min_relations) throw ConfigError("synthetic corpus: invalid relation range");
  if (spec.max_extra_objects < spec.min_extra_objects) throw ConfigError("synthetic corpus: invalid extra-object range");

  SyntheticGenerator gen(spec);
  const auto train = gen.make_items(spec.n_train, "train");
  const auto val = gen.make_items(spec.n_val, "val");
  const auto test = gen.make_items(spec.n_test, "test");

  std::vector<std::vector<std::string>> texts;
  for (const auto& r : train)
    for (const auto& c : r.captions) texts.push_back(c.tokens);

  SyntheticCorpus corpus;
  corpus.vocab = build_vocab(texts, spec.vocab_threshold);
  corpus.vocab.num_object_classes = kObjectNames.size();
  corpus.vocab.num_predicate_classes = kPredicateNames.size();
  corpus.vocab.object_names = kObjectNames;
  corpus.vocab.predicate_names = kPredicateNames;
  corpus.train = encode_split(train, corpus.vocab, Split::kTrain);
  corpus.val = encode_split(val, corpus.vocab, Split::kVal);
  corpus.test = encode_split(test, corpus.vocab, Split::kTest);
  return corpus;
}

SyntheticCorpus gen_synthetic(std::size_t n_pairs, std::uint64_t seed, std::size_t image_dim) {
  SyntheticSpec spec;
  spec.n_train = n_pairs;
  spec.n_val = spec.n_test = std::max<std::size_t>(2, n_pairs / 4);
  spec.seed = seed;
  spec.image_dim = image_dim;
  return gen_synthetic_corpus(spec);
}

}  // namespace lgsgm
