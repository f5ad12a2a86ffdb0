#include "lgsgm/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "lgsgm/evaluator.hpp"
#include "lgsgm/graphdata.hpp"
#include "lgsgm/io_util.hpp"
#include "lgsgm/model.hpp"
#include "lgsgm/trainer.hpp"

namespace fs = std::filesystem;

namespace lgsgm {
namespace {

struct DimsArgs {
  std::string dims;
  bool full_scale = false;

  ModelDims resolve() const {
    if (full_scale) return ModelDims::full_scale();
    if (dims.empty()) return ModelDims::desk();
    std::vector<std::size_t> v;
    std::stringstream ss(dims);
    std::string part;
    while (std::getline(ss, part, ',')) {
      try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(part, &used);
        if (used != part.size() || n == 0) throw std::invalid_argument(part);
        v.push_back(static_cast<std::size_t>(n));
      } catch (const std::exception&) {
        throw ConfigError("--dims expects four positive integers word,image,fused,hidden; got '" + dims + "'");
      }
    }
    if (v.size() != 4) throw ConfigError("--dims expects four positive integers word,image,fused,hidden; got '" + dims + "'");
    return {v[0], v[1], v[2], v[3]};
  }
};

void add_dims(CLI::App* cmd, DimsArgs& a) {
  auto* d = cmd->add_option("--dims", a.dims, "Model widths word,image,fused,hidden (default 16,32,32,24)");
  auto* p = cmd->add_flag("--paper-dims", a.full_scale, "Use the full-size widths 300,2048,2048,1024");
  d->excludes(p);
}

struct GenArgs {
  std::string out;
  std::size_t pairs = 64;
  std::uint64_t seed = 0;
  DimsArgs dims;
  SyntheticSpec spec;
};

struct TrainArgs {
  std::string data;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 3e-4;
  double margin = 0.35;
  std::string mining = "hardest";
  double clip_norm = 0.0;
  std::size_t patience = 0;
  double dropout = 0.3;
  double text_dropout = 0.0;
  bool no_global = false;
  bool no_batch_norm = false;
  std::string triplet_readout = "first-last";
  std::size_t threads = 1;
  bool resume = false;
  bool quiet = false;
  DimsArgs dims;
};

struct EvalArgs {
  std::string data;
  std::string ckpt;
  std::string split = "test";
  std::string out;
  std::size_t threads = 1;
  std::vector<std::size_t> ks{1, 5, 10};
};

struct RetrieveArgs {
  std::string data;
  std::string ckpt;
  std::string split = "test";
  std::string query;
  std::string direction = "i2t";
  std::size_t k = 5;
  std::size_t threads = 1;
};

fs::path data_file(const std::string& dir, const std::string& name) {
  const fs::path p = fs::path(dir) / name;
  if (!fs::is_regular_file(p)) throw IoError("missing data file " + p.string());
  return p;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

PairedDataset load_split(const std::string& dir, Split split, const Vocab& vocab) {
  LoadOptions opts;
  opts.split = split;
  return load_dataset(data_file(dir, std::string(split_name(split)) + ".jsonl"), vocab, opts);
}

void check_compatible(const ModelConfig& c, const Vocab& vocab, const PairedDataset& data) {
  auto mismatch = [](const std::string& what, std::size_t model, std::size_t found) {
    return DimensionError("checkpoint does not match the data: " + what + " is " + std::to_string(model) +
                          " in the model but " + std::to_string(found) + " in the data");
  };
  if (c.vocab_size != vocab.size()) throw mismatch("vocabulary size", c.vocab_size, vocab.size());
  if (c.num_object_classes != vocab.num_object_classes) {
    throw mismatch("object class count", c.num_object_classes, vocab.num_object_classes);
  }
  if (c.num_predicate_classes != vocab.num_predicate_classes) {
    throw mismatch("predicate class count", c.num_predicate_classes, vocab.num_predicate_classes);
  }
  for (const auto& item : data.items) {
    if (item.image.feat_dim != c.dims.image_dim) {
      throw mismatch("image feature width (image '" + item.image.id + "')", c.dims.image_dim, item.image.feat_dim);
    }
  }
}

int cmd_gen(const GenArgs& a, std::ostream& out) {
  if (a.pairs < 2) throw ConfigError("--pairs must be at least 2 (training needs a negative), got " + std::to_string(a.pairs));
  const ModelDims dims = a.dims.resolve();
  ensure_dir(a.out);
  SyntheticSpec spec = a.spec;
  spec.n_train = a.pairs;
  spec.n_val = spec.n_test = std::max<std::size_t>(2, a.pairs / 4);
  spec.seed = a.seed;
  spec.image_dim = dims.image_dim;
  const SyntheticCorpus corpus = gen_synthetic_corpus(spec);
  save_vocab(corpus.vocab, fs::path(a.out) / "vocab.json");
  save_dataset(corpus.train, fs::path(a.out) / "train.jsonl");
  save_dataset(corpus.val, fs::path(a.out) / "val.jsonl");
  save_dataset(corpus.test, fs::path(a.out) / "test.jsonl");
  out << "wrote " << corpus.train.items.size() << " train, " << corpus.val.items.size() << " val, "
      << corpus.test.items.size() << " test pairs and a " << corpus.vocab.size() << "-word vocabulary to " << a.out
      << "\n";
  return kExitOk;
}

std::string train_snapshot(const TrainArgs& a, const ModelDims& dims) {
  std::ostringstream os;
  os << "[train]\n";
  os << "data = \"" << a.data << "\"\n";
  os << "out = \"" << a.out << "\"\n";
  os << "seed = " << a.seed << "\n";
  os << "epochs = " << a.epochs << "\n";
  os << "batch = " << a.batch << "\n";
  os << "lr = " << format_double(a.lr) << "\n";
  os << "margin = " << format_double(a.margin) << "\n";
  os << "mining = \"" << a.mining << "\"\n";
  os << "clip-norm = " << format_double(a.clip_norm) << "\n";
  os << "patience = " << a.patience << "\n";
  os << "dropout = " << format_double(a.dropout) << "\n";
  os << "text-dropout = " << format_double(a.text_dropout) << "\n";
  os << "no-global = " << (a.no_global ? "true" : "false") << "\n";
  os << "no-batch-norm = " << (a.no_batch_norm ? "true" : "false") << "\n";
  os << "triplet-readout = \"" << a.triplet_readout << "\"\n";
  os << "threads = " << a.threads << "\n";
  os << "dims = \"" << dims.word_dim << "," << dims.image_dim << "," << dims.fused_dim << "," << dims.hidden_dim
     << "\"\n";
  return os.str();
}

std::string format_train_log(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os << "epoch\tmean_loss\tval_rsum\tval_i2t_r1\tval_t2i_r1\n";
  for (const auto& e : log) {
    os << e.epoch << "\t" << format_double(e.mean_loss) << "\t" << format_double(e.val_rsum) << "\t"
       << format_double(e.val_i2t_r1) << "\t" << format_double(e.val_t2i_r1) << "\n";
  }
  return os.str();
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig tc;
  tc.margin = a.margin;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.epochs = a.epochs;
  tc.seed = a.seed;
  tc.mining = parse_negative_mining(a.mining);
  tc.clip_norm = a.clip_norm;
  tc.patience = a.patience;
  tc.threads = std::max<std::size_t>(1, a.threads);
  tc.validate();
  if (a.dropout < 0.0 || a.dropout >= 1.0) throw ConfigError("--dropout must be in [0, 1)");
  if (a.text_dropout < 0.0 || a.text_dropout >= 1.0) throw ConfigError("--text-dropout must be in [0, 1)");
  const ModelDims dims = a.dims.resolve();
  const TripletReadout readout = parse_triplet_readout(a.triplet_readout);

  const Vocab vocab = load_vocab(data_file(a.data, "vocab.json"));
  const PairedDataset train_set = load_split(a.data, Split::kTrain, vocab);
  std::optional<PairedDataset> val_set;
  if (fs::exists(fs::path(a.data) / "val.jsonl")) val_set = load_split(a.data, Split::kVal, vocab);
  ensure_dir(a.out);
  const fs::path out_dir(a.out);
  const fs::path last_path = out_dir / "last.ckpt";
  const fs::path best_path = out_dir / "best.ckpt";

  std::unique_ptr<Model> model;
  TrainState state;
  if (a.resume && fs::exists(last_path)) {
    const Checkpoint last = load_checkpoint(last_path);
    model = model_from_checkpoint(last);
    restore_train_state(last, state);
    if (fs::exists(best_path)) state.best_params = load_checkpoint(best_path).tensors;
    out << "resuming after epoch " << state.epochs_done << "\n";
  } else {
    ModelConfig mc = ModelConfig::for_vocab(vocab, dims);
    mc.dropout = a.dropout;
    mc.text_dropout = a.text_dropout;
    mc.triplet_readout = readout;
    mc.match.use_global = !a.no_global;
    mc.batch_norm = !a.no_batch_norm;
    mc.init_seed = a.seed;
    model = std::make_unique<Model>(mc);
  }
  check_compatible(model->config(), vocab, train_set);
  if (val_set) check_compatible(model->config(), vocab, *val_set);
  if (state.epochs_done >= tc.epochs) {
    err << "warning: already trained for " << state.epochs_done << " epochs; nothing to do\n";
  }
  write_file_atomic(out_dir / "config.ini", train_snapshot(a, model->config().dims));

  auto save_best = [&](const ParameterSet& params) {
    Checkpoint best = make_checkpoint(*model, nullptr, &tc);
    best.tensors = params.clone();
    save_checkpoint(best_path, best);
  };
  train(*model, train_set, val_set ? &*val_set : nullptr, tc, state, [&](const EpochLog& e, const TrainState& s) {
    if (!a.quiet) {
      out << "epoch " << e.epoch << "  loss " << std::fixed << std::setprecision(6) << e.mean_loss;
      if (val_set) out << "  val rsum " << std::setprecision(2) << e.val_rsum;
      out << std::defaultfloat << "\n";
    }
    save_checkpoint(last_path, make_checkpoint(*model, &s, &tc));
    if (s.best_epoch == e.epoch) save_best(s.best_params);
    write_file_atomic(out_dir / "train_log.tsv", format_train_log(s.log));
  });
  if (!val_set || state.best_params.size() == 0) save_best(model->params());
  if (state.stopped_early) out << "stopped early after epoch " << state.epochs_done << "\n";
  out << "trained " << state.epochs_done << " epochs";
  if (state.best_epoch > 0) out << "; best validation R-Sum " << format_double(state.best_val_rsum) << " at epoch " << state.best_epoch;
  out << "\n";
  return kExitOk;
}

struct LoadedEval {
  std::unique_ptr<Model> model;
  PairedDataset data;
};

LoadedEval load_for_eval(const std::string& data_dir, const std::string& ckpt_path, const std::string& split) {
  if (!fs::is_regular_file(ckpt_path)) throw IoError("missing checkpoint " + ckpt_path);
  const Vocab vocab = load_vocab(data_file(data_dir, "vocab.json"));
  LoadedEval le;
  le.data = load_split(data_dir, parse_split(split), vocab);
  le.model = model_from_checkpoint(load_checkpoint(ckpt_path));
  check_compatible(le.model->config(), vocab, le.data);
  return le;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  for (std::size_t k : a.ks) {
    if (k == 0) throw ConfigError("--k values must be at least 1");
  }
  if (!a.out.empty()) ensure_dir(a.out);
  const LoadedEval le = load_for_eval(a.data, a.ckpt, a.split);
  const EncodedCorpus corpus = encode_corpus(*le.model, le.data, a.threads);
  const ScoreMatrix scores = score_all(corpus, le.model->config().match, a.threads);
  const MetricsReport m = report(rank_all(scores, corpus.caption_image), a.ks);
  const std::string table = format_table(m);
  out << table;
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    write_file_atomic(dir / "metrics.txt", table);
    write_file_atomic(dir / "metrics.tsv", format_lines(m));
    write_file_atomic(dir / "pairs.tsv", format_pair_dump(scores, corpus));
  }
  return kExitOk;
}

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out, std::ostream& err) {
  if (a.k == 0) throw ConfigError("--k must be at least 1");
  const bool i2t = a.direction == "i2t";
  if (!i2t && a.direction != "t2i") throw ConfigError("--direction must be i2t or t2i, got '" + a.direction + "'");
  const LoadedEval le = load_for_eval(a.data, a.ckpt, a.split);
  const EncodedCorpus corpus = encode_corpus(*le.model, le.data, a.threads);
  const auto& query_ids = i2t ? corpus.image_ids : corpus.caption_ids;
  const auto it = std::find(query_ids.begin(), query_ids.end(), a.query);
  if (it == query_ids.end()) {
    throw DataError(std::string("unknown ") + (i2t ? "image" : "caption") + " id '" + a.query + "' in the " + a.split +
                    " split");
  }
  const std::size_t q = static_cast<std::size_t>(it - query_ids.begin());
  const ScoreMatrix scores = score_all(corpus, le.model->config().match, a.threads);
  const std::size_t n = i2t ? scores.n_captions : scores.n_images;
  std::size_t k = a.k;
  if (k > n) {
    err << "warning: --k " << k << " exceeds the " << n << " candidates; showing all of them\n";
    k = n;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t c) { return i2t ? scores.key(q, c) : scores.key(c, q); };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return key(x) > key(y); });

  out << "rank\tid\tmatch\ts_node\ts_rel\ts_global\ts_total\n";
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t c = order[r];
    const SimilarityReport& s = i2t ? scores.at(q, c) : scores.at(c, q);
    const bool truth = i2t ? corpus.caption_image[c] == q : corpus.caption_image[q] == c;
    out << r + 1 << "\t" << (i2t ? corpus.caption_ids[c] : corpus.image_ids[c]) << "\t" << (truth ? "*" : "") << "\t"
        << format_double(s.s_node) << "\t" << format_double(s.s_rel) << "\t" << format_double(s.s_global) << "\t"
        << format_double(s.s_total) << (s.skipped ? "\tskipped" : "") << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scene-graph image-text retrieval: generate data, train, evaluate, retrieve"};
  app.name("lgsgm");
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML file; command-line flags win");

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Write a synthetic paired dataset and its vocabulary");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->add_option("--pairs", gen.pairs, "Training pairs; validation and test get max(2, pairs/4)");
  g->add_option("--seed", gen.seed, "Generator seed")->required();
  add_dims(g, gen.dims);
  g->add_option("--family-size", gen.spec.family_size, "Images per scene family (1 = independent scenes)");
  g->add_option("--min-extra-objects", gen.spec.min_extra_objects, "Fewest objects a family member adds");
  g->add_option("--max-extra-objects", gen.spec.max_extra_objects, "Most objects a family member adds");
  g->add_option("--feature-noise", gen.spec.feature_noise, "Standard deviation of region feature noise");
  g->add_option("--label-noise", gen.spec.label_noise, "Probability of a wrong detector label");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model; writes best.ckpt, last.ckpt, train_log.tsv, config.ini");
  t->add_option("--data", tr.data, "Dataset directory")->required();
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--seed", tr.seed, "Seed for initialisation, shuffling and dropout")->required();
  t->add_option("--epochs", tr.epochs, "Total number of epochs (including resumed ones)");
  t->add_option("--batch", tr.batch, "Mini-batch size (>= 2)");
  t->add_option("--lr", tr.lr, "Adam learning rate");
  t->add_option("--margin", tr.margin, "Hinge margin");
  t->add_option("--mining", tr.mining, "Negative mining: hardest or least");
  t->add_option("--clip-norm", tr.clip_norm, "Global gradient-norm clip (0 = off)");
  t->add_option("--patience", tr.patience, "Early-stopping patience in epochs (0 = off)");
  t->add_option("--dropout", tr.dropout, "Dropout rate on fused visual features");
  t->add_option("--text-dropout", tr.text_dropout, "Dropout rate on word embeddings");
  t->add_flag("--no-global", tr.no_global, "Train and score with the local terms only");
  t->add_flag("--no-batch-norm", tr.no_batch_norm, "Skip normalisation of fused visual features");
  t->add_option("--triplet-readout", tr.triplet_readout, "Triplet summary: first-last or final-states");
  t->add_option("--threads", tr.threads, "Worker threads for validation");
  t->add_flag("--resume", tr.resume, "Continue from last.ckpt in the run directory");
  t->add_flag("--quiet", tr.quiet, "Do not print per-epoch progress");
  add_dims(t, tr.dims);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Rank a split in both directions and report Recall@K");
  e->add_option("--data", ev.data, "Dataset directory")->required();
  e->add_option("--ckpt", ev.ckpt, "Checkpoint file")->required();
  e->add_option("--split", ev.split, "train, val or test");
  e->add_option("--out", ev.out, "Directory for metrics.txt, metrics.tsv and pairs.tsv");
  e->add_option("--threads", ev.threads, "Worker threads");
  e->add_option("--k", ev.ks, "Recall cut-offs")->expected(1, -1);

  RetrieveArgs rt;
  auto* r = app.add_subcommand("retrieve", "Show the top-k candidates for one query with score breakdown");
  r->add_option("--data", rt.data, "Dataset directory")->required();
  r->add_option("--ckpt", rt.ckpt, "Checkpoint file")->required();
  r->add_option("--split", rt.split, "train, val or test");
  r->add_option("--query", rt.query, "Image id (i2t) or caption id <image>#<n> (t2i)")->required();
  r->add_option("--direction", rt.direction, "i2t or t2i");
  r->add_option("--k", rt.k, "Number of results");
  r->add_option("--threads", rt.threads, "Worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (g->parsed()) return cmd_gen(gen, out);
    if (t->parsed()) return cmd_train(tr, out, err);
    if (e->parsed()) return cmd_eval(ev, out);
    return cmd_retrieve(rt, out, err);
  } catch (const ConfigError& x) {
    err << "error: " << x.what() << "\n";
    return kExitConfig;
  } catch (const DataError& x) {
    err << "error: " << x.what() << "\n";
    return kExitData;
  } catch (const DimensionError& x) {
    err << "error: " << x.what() << "\n";
    return kExitData;
  } catch (const NumericError& x) {
    err << "error: " << x.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& x) {
    err << "error: " << x.what() << "\n";
    return kExitIo;
  } catch (const std::exception& x) {
    err << "error: " << x.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace lgsgm
