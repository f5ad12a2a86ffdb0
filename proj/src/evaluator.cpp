#include "lgsgm/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "lgsgm/io_util.hpp"

namespace lgsgm {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w]() {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

EncodedCorpus encode_corpus(const Model& model, const PairedDataset& data, std::size_t threads) {
  EncodedCorpus c;
  std::vector<const TextGraph*> captions;
  for (std::size_t i = 0; i < data.items.size(); ++i) {
    c.image_ids.push_back(data.items[i].image.id);
    for (std::size_t k = 0; k < data.items[i].captions.size(); ++k) {
      captions.push_back(&data.items[i].captions[k]);
      c.caption_image.push_back(i);
      c.caption_ids.push_back(data.items[i].image.id + "#" + std::to_string(k));
    }
  }
  c.images.resize(data.items.size());
  c.captions.resize(captions.size());
  parallel_for(data.items.size(), threads, [&](std::size_t i) { c.images[i] = model.encode_image(data.items[i].image); });
  parallel_for(captions.size(), threads, [&](std::size_t j) { c.captions[j] = model.encode_caption(*captions[j]); });
  return c;
}

double ScoreMatrix::key(std::size_t image, std::size_t caption) const {
  const auto& r = at(image, caption);
  return r.skipped ? -std::numeric_limits<double>::infinity() : r.s_total;
}

ScoreMatrix score_all(const EncodedCorpus& corpus, const MatchConfig& config, std::size_t threads) {
  ScoreMatrix m;
  m.n_images = corpus.images.size();
  m.n_captions = corpus.captions.size();
  m.reports.resize(m.n_images * m.n_captions);
  parallel_for(m.n_images, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < m.n_captions; ++j) {
      m.reports[i * m.n_captions + j] = total_score(corpus.images[i], corpus.captions[j], config).report();
    }
  });
  return m;
}

const char* direction_name(Direction d) {
  return d == Direction::kImageToText ? "image_to_text" : "text_to_image";
}

namespace {

// 1-based position of candidate `target` when candidates are sorted by
// descending key, ties by ascending index.
std::size_t rank_of(std::size_t target, std::size_t n, const std::function<double(std::size_t)>& key) {
  const double kt = key(target);
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double kj = key(j);
    if (kj > kt || (kj == kt && j < target)) ++ahead;
  }
  return ahead + 1;
}

}  // namespace

Rankings rank_all(const ScoreMatrix& scores, std::span<const std::size_t> caption_image) {
  if (scores.n_images == 0 || scores.n_captions == 0) throw ContractError("rank_all: empty corpus");
  if (caption_image.size() != scores.n_captions) {
    throw DimensionError("rank_all: " + std::to_string(caption_image.size()) + " ground-truth links for " +
                         std::to_string(scores.n_captions) + " captions");
  }
  Rankings r;
  r.image_to_text.direction = Direction::kImageToText;
  r.image_to_text.corpus_size = scores.n_captions;
  r.text_to_image.direction = Direction::kTextToImage;
  r.text_to_image.corpus_size = scores.n_images;
  for (std::size_t i = 0; i < scores.n_images; ++i) {
    std::size_t best = std::numeric_limits<std::size_t>::max();
    const auto key = [&](std::size_t j) { return scores.key(i, j); };
    for (std::size_t j = 0; j < scores.n_captions; ++j) {
      if (caption_image[j] == i) best = std::min(best, rank_of(j, scores.n_captions, key));
    }
    // An image without captions can never be answered correctly.
    if (best == std::numeric_limits<std::size_t>::max()) best = scores.n_captions + 1;
    r.image_to_text.ranks.push_back(best);
  }
  for (std::size_t j = 0; j < scores.n_captions; ++j) {
    const auto key = [&](std::size_t i) { return scores.key(i, j); };
    r.text_to_image.ranks.push_back(rank_of(caption_image[j], scores.n_images, key));
  }
  return r;
}

double recall_at_k(const RankingResult& result, std::size_t k) {
  if (k == 0) throw ContractError("recall_at_k: k must be >= 1");
  if (result.ranks.empty()) throw ContractError("recall_at_k: no queries");
  k = std::min(k, result.corpus_size);
  const auto hits = std::count_if(result.ranks.begin(), result.ranks.end(), [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(result.ranks.size());
}

MetricsReport report(const Rankings& rankings, std::span<const std::size_t> ks) {
  static const std::size_t kDefaultKs[] = {1, 5, 10};
  if (ks.empty()) ks = kDefaultKs;
  MetricsReport m;
  m.ks.assign(ks.begin(), ks.end());
  auto fill = [&](const RankingResult& r, DirectionMetrics& out) {
    for (std::size_t k : ks) {
      out.recall.push_back(100.0 * recall_at_k(r, k));
      out.rsum += out.recall.back();
    }
  };
  fill(rankings.image_to_text, m.image_to_text);
  fill(rankings.text_to_image, m.text_to_image);
  m.total_rsum = m.image_to_text.rsum + m.text_to_image.rsum;
  return m;
}

std::string format_table(const MetricsReport& m) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "direction";
  for (std::size_t k : m.ks) os << std::right << std::setw(9) << ("R@" + std::to_string(k));
  os << std::right << std::setw(9) << "R-Sum" << "\n";
  auto row = [&](const char* name, const DirectionMetrics& d) {
    os << std::left << std::setw(16) << name << std::right << std::fixed << std::setprecision(2);
    for (double r : d.recall) os << std::setw(9) << r;
    os << std::setw(9) << d.rsum << "\n";
  };
  row("caption (i->t)", m.image_to_text);
  row("image (t->i)", m.text_to_image);
  os << std::left << std::setw(16) << "total R-Sum" << std::right << std::fixed << std::setprecision(2)
     << std::setw(9) << m.total_rsum << "\n";
  return os.str();
}

std::string format_lines(const MetricsReport& m) {
  std::ostringstream os;
  auto emit = [&](Direction dir, const DirectionMetrics& d) {
    for (std::size_t i = 0; i < m.ks.size(); ++i) {
      os << "recall\t" << direction_name(dir) << "\t" << m.ks[i] << "\t" << format_double(d.recall[i]) << "\n";
    }
    os << "rsum\t" << direction_name(dir) << "\t0\t" << format_double(d.rsum) << "\n";
  };
  emit(Direction::kImageToText, m.image_to_text);
  emit(Direction::kTextToImage, m.text_to_image);
  os << "rsum\ttotal\t0\t" << format_double(m.total_rsum) << "\n";
  return os.str();
}

MetricsReport parse_lines(const std::string& text) {
  MetricsReport m;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, dir;
    std::size_t k = 0;
    std::string value_text;
    if (!(ls >> name >> dir >> k >> value_text)) {
      throw DataError("metrics line " + std::to_string(line_no) + ": expected 4 fields");
    }
    const double value = std::stod(value_text);
    DirectionMetrics* target = nullptr;
    if (dir == "image_to_text") target = &m.image_to_text;
    else if (dir == "text_to_image") target = &m.text_to_image;
    if (name == "recall" && target != nullptr) {
      if (target == &m.image_to_text) m.ks.push_back(k);
      target->recall.push_back(value);
    } else if (name == "rsum" && target != nullptr) {
      target->rsum = value;
    } else if (name == "rsum" && dir == "total") {
      m.total_rsum = value;
    } else {
      throw DataError("metrics line " + std::to_string(line_no) + ": unknown metric '" + name + " " + dir + "'");
    }
  }
  return m;
}

std::string format_pair_dump(const ScoreMatrix& scores, const EncodedCorpus& corpus) {
  std::ostringstream os;
  os << "image\tcaption\ttrue_pair\ts_node\ts_rel\ts_local\ts_global\ts_total\tskipped\n";
  for (std::size_t i = 0; i < scores.n_images; ++i) {
    for (std::size_t j = 0; j < scores.n_captions; ++j) {
      const auto& r = scores.at(i, j);
      os << corpus.image_ids[i] << "\t" << corpus.caption_ids[j] << "\t" << (corpus.caption_image[j] == i ? 1 : 0)
         << "\t" << format_double(r.s_node) << "\t" << format_double(r.s_rel) << "\t" << format_double(r.s_local)
         << "\t" << format_double(r.s_global) << "\t" << format_double(r.s_total) << "\t" << (r.skipped ? 1 : 0)
         << "\n";
    }
  }
  return os.str();
}

MetricsReport evaluate(const Model& model, const PairedDataset& data, std::size_t threads) {
  const EncodedCorpus corpus = encode_corpus(model, data, threads);
  const ScoreMatrix scores = score_all(corpus, model.config().match, threads);
  return report(rank_all(scores, corpus.caption_image));
}

}  // namespace lgsgm
