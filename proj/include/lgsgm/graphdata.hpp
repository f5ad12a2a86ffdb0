#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lgsgm/errors.hpp"

namespace lgsgm {

struct Relation {
  std::size_t subject = 0;
  std::size_t predicate = 0;
  std::size_t object = 0;

  friend bool operator==(const Relation&, const Relation&) = default;
};

// Scene graph of an image with precomputed region features.
struct VisualGraph {
  std::string id;
  std::vector<std::size_t> objects;          // object category per node
  std::vector<std::array<double, 4>> boxes;  // normalised [x0, y0, x1, y1]; kept for provenance
  std::vector<Relation> relations;
  std::size_t feat_dim = 0;
  std::vector<double> node_feats;  // objects.size() x feat_dim, row-major
  std::vector<double> edge_feats;  // relations.size() x feat_dim, row-major
  // Detector confidences. Empty means "all equal".
  std::vector<double> object_scores;
  std::vector<double> relation_scores;

  std::size_t num_objects() const { return objects.size(); }
  std::size_t num_relations() const { return relations.size(); }
  std::span<const double> node_feat(std::size_t i) const {
    return std::span<const double>(node_feats).subspan(i * feat_dim, feat_dim);
  }
  std::span<const double> edge_feat(std::size_t i) const {
    return std::span<const double>(edge_feats).subspan(i * feat_dim, feat_dim);
  }

  friend bool operator==(const VisualGraph&, const VisualGraph&) = default;
};

// Caption tokens plus parsed relation triplets. Each triplet is a word-id
// sequence: subject word first, object word last, predicate words between.
struct TextGraph {
  std::vector<std::size_t> tokens;
  std::vector<std::vector<std::size_t>> triplets;

  friend bool operator==(const TextGraph&, const TextGraph&) = default;
};

struct PairedItem {
  VisualGraph image;
  std::vector<TextGraph> captions;

  friend bool operator==(const PairedItem&, const PairedItem&) = default;
};

enum class Split { kTrain, kVal, kTest };

const char* split_name(Split s);
Split parse_split(const std::string& name);

struct PairedDataset {
  Split split = Split::kTrain;
  std::vector<PairedItem> items;

  std::size_t num_captions() const;

  friend bool operator==(const PairedDataset&, const PairedDataset&) = default;
};

// Word <-> id mapping. Id 0 is always the unknown word; kept words follow in
// lexicographic order. Also records the detector's category counts.
class Vocab {
 public:
  static constexpr std::size_t kUnknownId = 0;
  static constexpr const char* kUnknownWord = "<unk>";

  Vocab();

  std::size_t size() const { return words_.size(); }
  std::size_t id(const std::string& word) const;  // unknown id for unseen words
  const std::string& word(std::size_t id) const;
  bool contains(const std::string& word) const { return index_.count(word) != 0; }
  std::vector<std::size_t> encode(std::span<const std::string> tokens) const;
  std::span<const std::string> words() const { return words_; }

  std::size_t threshold() const { return threshold_; }

  std::size_t num_object_classes = 0;
  std::size_t num_predicate_classes = 0;
  // Optional display names for detector categories.
  std::vector<std::string> object_names;
  std::vector<std::string> predicate_names;

  friend Vocab build_vocab(std::span<const std::vector<std::string>> captions, std::size_t threshold);
  friend Vocab load_vocab(const std::filesystem::path& path);

 private:
  std::vector<std::string> words_;
  std::map<std::string, std::size_t> index_;
  std::size_t threshold_ = 1;
};

// Words with corpus frequency below `threshold` are left out and therefore
// map to the unknown id. DataError on an empty corpus, ConfigError when
// threshold == 0.
Vocab build_vocab(std::span<const std::vector<std::string>> captions, std::size_t threshold);

void save_vocab(const Vocab& vocab, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

struct CapLimits {
  std::size_t objects = 36;
  std::size_t relations = 25;
};

struct LoadOptions {
  Split split = Split::kTrain;
  CapLimits caps;
  bool apply_caps = true;
};

// Throws DataError describing the first violated invariant.
void validate(const VisualGraph& g, const Vocab& vocab);
void validate(const TextGraph& t, const Vocab& vocab);
void validate(const PairedDataset& d, const Vocab& vocab);

// One JSON record per line; see docs/formats.md.
void save_dataset(const PairedDataset& dataset, const std::filesystem::path& path);
std::string dataset_to_string(const PairedDataset& dataset);
PairedDataset load_dataset(const std::filesystem::path& path, const Vocab& vocab,
                           const LoadOptions& options = {});
PairedDataset parse_dataset(const std::string& text, const Vocab& vocab, const LoadOptions& options = {});

// Keeps the highest-confidence objects and relations, drops relations whose
// endpoints were removed and re-indexes the rest. Ties go to the lower index;
// survivors keep their original relative order.
VisualGraph cap_graph(const VisualGraph& g, const CapLimits& caps);

// Desk-scale stand-in for a real captioned corpus.
struct SyntheticSpec {
  std::size_t n_train = 64;
  std::size_t n_val = 16;
  std::size_t n_test = 16;
  std::uint64_t seed = 7;
  std::size_t image_dim = 32;
  std::size_t captions_per_image = 5;
  std::size_t min_objects = 3;
  std::size_t max_objects = 5;
  std::size_t min_relations = 2;
  std::size_t max_relations = 4;
  // Consecutive images form families: a base scene, then scenes that add
  // extra objects (and one relation per extra object) to the previous one.
  std::size_t family_size = 2;
  std::size_t min_extra_objects = 2;
  std::size_t max_extra_objects = 4;
  double feature_noise = 0.3;
  double label_noise = 0.05;
  std::size_t vocab_threshold = 4;
};

struct SyntheticCorpus {
  Vocab vocab;
  PairedDataset train;
  PairedDataset val;
  PairedDataset test;
};

// Deterministic for a given spec. Image features are noisy linear images of
// the latent object/predicate one-hots; captions describe the same latent
// scene. The vocabulary is built from the training captions only.
SyntheticCorpus gen_synthetic_corpus(const SyntheticSpec& spec);
// n_pairs training pairs plus held-out splits of max(2, n_pairs / 4) each.
SyntheticCorpus gen_synthetic(std::size_t n_pairs, std::uint64_t seed, std::size_t image_dim);

// Category names used by the synthetic generator.
std::span<const std::string> synthetic_object_names();
std::span<const std::string> synthetic_predicate_names();

}  // namespace lgsgm
