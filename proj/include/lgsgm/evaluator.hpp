#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lgsgm/graphdata.hpp"
#include "lgsgm/model.hpp"

namespace lgsgm {

// Every image and caption of a split encoded once with frozen parameters.
struct EncodedCorpus {
  std::vector<ImageEncoding> images;
  std::vector<CaptionEncoding> captions;
  std::vector<std::size_t> caption_image;  // ground-truth image of each caption
  std::vector<std::string> image_ids;
  std::vector<std::string> caption_ids;    // "<image id>#<caption index>"
};

// Runs in evaluation mode; `threads` caps the number of worker threads.
EncodedCorpus encode_corpus(const Model& model, const PairedDataset& data, std::size_t threads = 1);

// Dense images x captions matrix of similarity reports.
struct ScoreMatrix {
  std::size_t n_images = 0;
  std::size_t n_captions = 0;
  std::vector<SimilarityReport> reports;  // row-major, image-major

  const SimilarityReport& at(std::size_t image, std::size_t caption) const {
    return reports[image * n_captions + caption];
  }
  // Ranking key: s_total, or -infinity for a skipped pair.
  double key(std::size_t image, std::size_t caption) const;
};

ScoreMatrix score_all(const EncodedCorpus& corpus, const MatchConfig& config, std::size_t threads = 1);

enum class Direction { kImageToText, kTextToImage };
const char* direction_name(Direction d);

// Rank (1-based) of the best-placed ground-truth answer for every query.
struct RankingResult {
  Direction direction = Direction::kImageToText;
  std::vector<std::size_t> ranks;
  std::size_t corpus_size = 0;  // number of candidates per query
};

struct Rankings {
  RankingResult image_to_text;
  RankingResult text_to_image;
};

// Candidates are ordered by descending score, equal scores by ascending
// index. ContractError for an empty corpus.
Rankings rank_all(const ScoreMatrix& scores, std::span<const std::size_t> caption_image);

// Fraction of queries whose best ground-truth rank is <= k. k is clamped to
// the corpus size; ContractError for k == 0.
double recall_at_k(const RankingResult& result, std::size_t k);

// Recall values are percentages; R-Sum adds them up.
struct DirectionMetrics {
  std::vector<double> recall;  // parallel to MetricsReport::ks
  double rsum = 0.0;
};

struct MetricsReport {
  std::vector<std::size_t> ks;
  DirectionMetrics image_to_text;
  DirectionMetrics text_to_image;
  double total_rsum = 0.0;
};

MetricsReport report(const Rankings& rankings, std::span<const std::size_t> ks = std::span<const std::size_t>());

// Human-readable table.
std::string format_table(const MetricsReport& m);
// One metric per line: "<name>\t<direction>\t<k>\t<value>", exact values.
std::string format_lines(const MetricsReport& m);
MetricsReport parse_lines(const std::string& text);

// Tab-separated dump of every pair's score breakdown.
std::string format_pair_dump(const ScoreMatrix& scores, const EncodedCorpus& corpus);

// encode_corpus + score_all + rank_all + report.
MetricsReport evaluate(const Model& model, const PairedDataset& data, std::size_t threads = 1);

// Calls fn(i) for i in [0, n) over at most `threads` workers. The first
// exception thrown by any call is rethrown on the calling thread.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace lgsgm
