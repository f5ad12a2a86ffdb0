#include "lgsgm/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include "lgsgm/io_util.hpp"

namespace lgsgm {

using nlohmann::json;

NegativeMining parse_negative_mining(const std::string& name) {
  if (name == "hardest") return NegativeMining::kHardest;
  if (name == "least") return NegativeMining::kLeastMatching;
  throw ConfigError("unknown negative mining '" + name + "' (expected hardest or least)");
}

const char* negative_mining_name(NegativeMining m) {
  return m == NegativeMining::kHardest ? "hardest" : "least";
}

num::Tensor batch_loss(const num::Tensor& scores, double margin, NegativeMining mining) {
  const std::size_t b = scores.rows();
  if (b != scores.cols()) throw ContractError("batch_loss: score matrix is " + num::shape_str(scores.shape()));
  if (b < 2) throw ContractError("batch_loss: need at least 2 pairs per batch, got " + std::to_string(b));
  const bool hardest = mining == NegativeMining::kHardest;
  auto better = [hardest](double cand, double best) { return hardest ? cand > best : cand < best; };

  std::vector<num::Tensor> terms;
  terms.reserve(2 * b);
  for (std::size_t k = 0; k < b; ++k) {
    std::size_t l_hat = b, k_hat = b;
    for (std::size_t j = 0; j < b; ++j) {
      if (j == k) continue;
      if (l_hat == b || better(scores.at(k, j), scores.at(k, l_hat))) l_hat = j;
      if (k_hat == b || better(scores.at(j, k), scores.at(k_hat, k))) k_hat = j;
    }
    const num::Tensor pos = num::pick(scores, k, k);
    terms.push_back(num::relu(num::add_scalar(num::sub(num::pick(scores, k, l_hat), pos), margin)));
    terms.push_back(num::relu(num::add_scalar(num::sub(num::pick(scores, k_hat, k), pos), margin)));
  }
  return num::sum(num::concat_rows(terms));
}

void Adam::step(ParameterSet& params) {
  for (const auto& e : params.entries()) {
    if (e.trainable && e.tensor.size() > 0 && e.tensor.grad().size() != e.tensor.size()) {
      throw ContractError("adam: parameter '" + e.name + "' has no gradient");
    }
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    num::Tensor tensor = e.tensor;
    auto& mom = moments_[e.name];
    if (mom.m.size() != tensor.size()) {
      mom.m.assign(tensor.size(), 0.0);
      mom.v.assign(tensor.size(), 0.0);
    }
    const auto g = tensor.grad();
    auto w = tensor.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g[i];
      mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      w[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

void Adam::restore(std::uint64_t steps, std::map<std::string, Moments> moments) {
  steps_ = steps;
  moments_ = std::move(moments);
}

void TrainConfig::validate() const {
  if (!(margin > 0.0) || !std::isfinite(margin)) throw ConfigError("margin must be positive");
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip norm must be non-negative");
}

json to_json(const TrainConfig& c) {
  return {{"margin", c.margin},         {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"seed", c.seed},             {"mining", negative_mining_name(c.mining)},
          {"clip_norm", c.clip_norm},   {"patience", c.patience},
          {"threads", c.threads}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.margin = j.value("margin", c.margin);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.mining = parse_negative_mining(j.value("mining", std::string("hardest")));
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.patience = j.value("patience", c.patience);
    c.threads = j.value("threads", c.threads);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},           {"mean_loss", e.mean_loss},   {"batch_losses", e.batch_losses},
          {"val_rsum", e.val_rsum},     {"val_i2t_r1", e.val_i2t_r1}, {"val_t2i_r1", e.val_t2i_r1}};
}

EpochLog epoch_log_from_json(const json& j) {
  EpochLog e;
  e.epoch = j.at("epoch").get<std::size_t>();
  e.mean_loss = j.at("mean_loss").get<double>();
  e.batch_losses = j.at("batch_losses").get<std::vector<double>>();
  e.val_rsum = j.at("val_rsum").get<double>();
  e.val_i2t_r1 = j.at("val_i2t_r1").get<double>();
  e.val_t2i_r1 = j.at("val_t2i_r1").get<double>();
  return e;
}

num::Tensor batch_scores(const Model& model, std::span<const ImageEncoding> images,
                         std::span<const CaptionEncoding> captions) {
  std::vector<num::Tensor> cells;
  cells.reserve(images.size() * captions.size());
  for (const auto& img : images) {
    for (const auto& cap : captions) {
      ScoreTerms t = model.score(img, cap);
      if (t.skipped) throw ConfigError("training does not support the skip-pair relation fallback");
      cells.push_back(t.total);
    }
  }
  const num::Tensor column = num::concat_rows(cells);
  // Reshape (B*B) x 1 into rows of captions by slicing and joining columns.
  std::vector<num::Tensor> rows;
  rows.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    num::Tensor r = num::transpose(num::slice_rows(column, i * captions.size(), captions.size()));
    rows.push_back(r);
  }
  return num::concat_rows(rows);
}

namespace {

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), 0x6c67u};
  return std::mt19937_64(seq);
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const std::size_t end = std::min(order.size(), i + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  // A trailing single pair has no negative; fold it into the previous batch.
  if (batches.size() > 1 && batches.back().size() < 2) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

void clip_gradients(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    for (double g : e.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double f = max_norm / norm;
  for (const auto& e : params.entries()) {
    if (!e.trainable) continue;
    num::Tensor t = e.tensor;
    for (double& g : t.mutable_grad()) g *= f;
  }
}

double train_batch(Model& model, const PairedDataset& data, std::span<const std::size_t> batch, std::size_t epoch,
                   std::size_t batch_index, const TrainConfig& config, Adam& adam) {
  std::mt19937_64 rng = derived_rng(config.seed, epoch, batch_index + 1);
  const ForwardMode mode = ForwardMode::train(rng);
  std::vector<const VisualGraph*> images;
  std::vector<const TextGraph*> captions;
  for (std::size_t idx : batch) {
    const PairedItem& item = data.items[idx];
    images.push_back(&item.image);
    captions.push_back(&item.captions[(epoch - 1 + idx) % item.captions.size()]);
  }

  num::Tape tape;
  num::Tensor loss;
  {
    num::TapeScope scope(tape);
    const std::vector<ImageEncoding> enc_images = model.encode_images(images, mode);
    std::vector<CaptionEncoding> enc_captions;
    enc_captions.reserve(captions.size());
    for (const TextGraph* c : captions) enc_captions.push_back(model.encode_caption(*c, mode));
    loss = batch_loss(batch_scores(model, enc_images, enc_captions), config.margin, config.mining);
  }
  const double value = loss.item();
  if (!std::isfinite(value)) {
    const std::string where = tape.first_non_finite();
    throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                       std::to_string(batch_index + 1) + "; first non-finite tensor: " +
                       (where.empty() ? std::string("loss") : where));
  }
  model.params().zero_grads();
  tape.backward(loss);
  if (config.clip_norm > 0.0) clip_gradients(model.params(), config.clip_norm);
  adam.step(model.params());
  return value;
}

}  // namespace

void train(Model& model, const PairedDataset& train_set, const PairedDataset* val_set, const TrainConfig& config,
           TrainState& state, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.items.size() < 2) {
    throw DataError("training needs at least 2 pairs, got " + std::to_string(train_set.items.size()));
  }
  for (const auto& item : train_set.items) {
    if (item.captions.empty()) throw DataError("training image '" + item.image.id + "' has no captions");
  }
  if (model.match().relation_fallback == RelationFallback::kSkipPair) {
    throw ConfigError("training does not support the skip-pair relation fallback");
  }
  if (state.adam.steps() == 0 && state.adam.moments().empty()) {
    state.adam = Adam(AdamConfig{config.learning_rate});
  }

  for (std::size_t epoch = state.epochs_done + 1; epoch <= config.epochs && !state.stopped_early; ++epoch) {
    std::vector<std::size_t> order(train_set.items.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng = derived_rng(config.seed, epoch, 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    const auto batches = make_batches(std::move(order), config.batch_size);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      log.batch_losses.push_back(train_batch(model, train_set, batches[b], epoch, b, config, state.adam));
    }
    log.mean_loss = std::accumulate(log.batch_losses.begin(), log.batch_losses.end(), 0.0) /
                    static_cast<double>(log.batch_losses.size());

    if (val_set != nullptr && !val_set->items.empty()) {
      const MetricsReport m = evaluate(model, *val_set, config.threads);
      log.val_rsum = m.total_rsum;
      log.val_i2t_r1 = m.image_to_text.recall.front();
      log.val_t2i_r1 = m.text_to_image.recall.front();
      if (log.val_rsum > state.best_val_rsum) {
        state.best_val_rsum = log.val_rsum;
        state.best_epoch = epoch;
        state.best_params = model.params().clone();
        state.stale_epochs = 0;
      } else {
        ++state.stale_epochs;
        if (config.patience > 0 && state.stale_epochs >= config.patience) state.stopped_early = true;
      }
    }
    state.epochs_done = epoch;
    state.log.push_back(log);
    if (on_epoch) on_epoch(log, state);
  }
}

// ------------------------------------------------------------------ checkpoints

namespace {

constexpr const char* kMagic = "LGSGMCKPT";
constexpr const char* kOptimizerFirst = "optimizer.m/";
constexpr const char* kOptimizerSecond = "optimizer.v/";

void put_le(std::string& out, std::uint64_t bits, std::size_t bytes) {
  for (std::size_t i = 0; i < bytes; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

std::uint64_t get_le(const std::string& in, std::size_t pos, std::size_t bytes) {
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < bytes; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return bits;
}

struct BlobTensor {
  std::string name;
  std::size_t rows, cols;
  bool trainable;
  std::span<const double> values;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt, CheckpointDtype dtype) {
  std::vector<BlobTensor> items;
  for (const auto& e : ckpt.tensors.entries()) {
    items.push_back({e.name, e.tensor.rows(), e.tensor.cols(), e.trainable, e.tensor.values()});
  }
  for (const auto& [name, mom] : ckpt.optimizer) {
    items.push_back({kOptimizerFirst + name, 1, mom.m.size(), false, mom.m});
    items.push_back({kOptimizerSecond + name, 1, mom.v.size(), false, mom.v});
  }
  const bool f32 = dtype == CheckpointDtype::kF32;
  json tensors = json::array();
  std::string blob;
  for (const auto& t : items) {
    tensors.push_back({{"name", t.name},
                       {"shape", {t.rows, t.cols}},
                       {"offset", blob.size()},
                       {"dtype", f32 ? "f32" : "f64"},
                       {"trainable", t.trainable}});
    for (double v : t.values) {
      if (f32) {
        put_le(blob, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
      } else {
        put_le(blob, std::bit_cast<std::uint64_t>(v), 8);
      }
    }
  }
  json manifest = {{"format_version", kCheckpointVersion},
                   {"tensors", tensors},
                   {"blob_bytes", blob.size()},
                   {"optimizer_steps", ckpt.optimizer_steps},
                   {"config", ckpt.model_config},
                   {"extra", ckpt.extra}};
  std::string out = std::string(kMagic) + "\n" + manifest.dump() + "\n";
  out += blob;
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const std::size_t magic_end = bytes.find('\n');
  if (magic_end == std::string::npos || bytes.compare(0, magic_end, kMagic) != 0) {
    throw IoError("checkpoint: missing header");
  }
  const std::size_t manifest_end = bytes.find('\n', magic_end + 1);
  if (manifest_end == std::string::npos) throw IoError("checkpoint: truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.substr(magic_end + 1, manifest_end - magic_end - 1));
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: unreadable manifest: ") + e.what());
  }

  Checkpoint ckpt;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw IoError("checkpoint: format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
    }
    const std::size_t blob_start = manifest_end + 1;
    const std::size_t blob_bytes = manifest.at("blob_bytes").get<std::size_t>();
    if (bytes.size() - blob_start != blob_bytes) {
      throw IoError("checkpoint: blob holds " + std::to_string(bytes.size() - blob_start) + " bytes, manifest says " +
                    std::to_string(blob_bytes) + " (truncated file?)");
    }
    ckpt.model_config = manifest.at("config");
    ckpt.extra = manifest.value("extra", json::object());
    ckpt.optimizer_steps = manifest.value("optimizer_steps", std::uint64_t{0});

    for (const auto& t : manifest.at("tensors")) {
      const std::string name = t.at("name").get<std::string>();
      const auto shape = t.at("shape").get<std::vector<std::size_t>>();
      if (shape.size() != 2) throw IoError("checkpoint: tensor '" + name + "' does not have a 2-d shape");
      const std::string dtype = t.at("dtype").get<std::string>();
      if (dtype != "f64" && dtype != "f32") throw IoError("checkpoint: tensor '" + name + "' has dtype " + dtype);
      const std::size_t width = dtype == "f64" ? 8 : 4;
      const std::size_t offset = t.at("offset").get<std::size_t>();
      const std::size_t count = shape[0] * shape[1];
      if (offset > blob_bytes || count * width > blob_bytes - offset) {
        throw IoError("checkpoint: tensor '" + name + "' extends past the end of the blob");
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t pos = blob_start + offset + i * width;
        values[i] = width == 8 ? std::bit_cast<double>(get_le(bytes, pos, 8))
                               : static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(get_le(bytes, pos, 4))));
      }
      if (name.starts_with(kOptimizerFirst)) {
        ckpt.optimizer[name.substr(std::strlen(kOptimizerFirst))].m = std::move(values);
      } else if (name.starts_with(kOptimizerSecond)) {
        ckpt.optimizer[name.substr(std::strlen(kOptimizerSecond))].v = std::move(values);
      } else {
        // Non-finite values are legitimate in a raw dump; build without the check.
        num::Tensor tensor = num::Tensor::zeros(shape[0], shape[1]);
        std::copy(values.begin(), values.end(), tensor.mutable_values().begin());
        ckpt.tensors.add(name, tensor, t.value("trainable", true));
      }
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint: malformed manifest: ") + e.what());
  } catch (const ContractError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }
  for (const auto& [name, mom] : ckpt.optimizer) {
    if (mom.m.size() != mom.v.size()) throw IoError("checkpoint: optimiser moments of '" + name + "' are incomplete");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt, CheckpointDtype dtype) {
  write_file_atomic(path, encode_checkpoint(ckpt, dtype));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

Checkpoint make_checkpoint(const Model& model, const TrainState* state, const TrainConfig* config) {
  Checkpoint ckpt;
  ckpt.model_config = to_json(model.config());
  ckpt.tensors = model.params().clone();
  ckpt.extra = json::object();
  if (config != nullptr) ckpt.extra["train_config"] = to_json(*config);
  if (state != nullptr) {
    ckpt.optimizer = state->adam.moments();
    ckpt.optimizer_steps = state->adam.steps();
    json log = json::array();
    for (const auto& e : state->log) log.push_back(to_json(e));
    ckpt.extra["train_state"] = {{"epochs_done", state->epochs_done},
                                 {"best_val_rsum", state->best_val_rsum},
                                 {"best_epoch", state->best_epoch},
                                 {"stale_epochs", state->stale_epochs},
                                 {"stopped_early", state->stopped_early},
                                 {"adam",
                                  {{"learning_rate", state->adam.config().learning_rate},
                                   {"beta1", state->adam.config().beta1},
                                   {"beta2", state->adam.config().beta2},
                                   {"eps", state->adam.config().eps}}},
                                 {"log", log}};
  }
  return ckpt;
}

void restore_params(const Checkpoint& ckpt, ParameterSet& params) {
  for (const auto& e : params.entries()) {
    const ParameterSet::Entry* stored = ckpt.tensors.find(e.name);
    if (stored == nullptr) throw DimensionError("checkpoint has no tensor '" + e.name + "'");
    if (stored->tensor.shape() != e.tensor.shape()) {
      throw DimensionError("checkpoint tensor '" + e.name + "' has shape " + num::shape_str(stored->tensor.shape()) +
                           ", model expects " + num::shape_str(e.tensor.shape()));
    }
  }
  for (const auto& e : ckpt.tensors.entries()) {
    if (params.find(e.name) == nullptr) throw DimensionError("checkpoint tensor '" + e.name + "' is not part of the model");
  }
  for (const auto& e : params.entries()) {
    num::Tensor dst = e.tensor;
    const auto src = ckpt.tensors.find(e.name)->tensor.values();
    std::copy(src.begin(), src.end(), dst.mutable_values().begin());
  }
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt) {
  auto model = std::make_unique<Model>(model_config_from_json(ckpt.model_config));
  restore_params(ckpt, model->params());
  return model;
}

void restore_train_state(const Checkpoint& ckpt, TrainState& state) {
  if (!ckpt.extra.contains("train_state")) throw DataError("checkpoint carries no training state");
  const json& s = ckpt.extra.at("train_state");
  try {
    TrainState restored;
    restored.epochs_done = s.at("epochs_done").get<std::size_t>();
    restored.best_val_rsum = s.at("best_val_rsum").get<double>();
    restored.best_epoch = s.at("best_epoch").get<std::size_t>();
    restored.stale_epochs = s.at("stale_epochs").get<std::size_t>();
    restored.stopped_early = s.value("stopped_early", false);
    const json& a = s.at("adam");
    restored.adam = Adam(AdamConfig{a.at("learning_rate").get<double>(), a.at("beta1").get<double>(),
                                    a.at("beta2").get<double>(), a.at("eps").get<double>()});
    restored.adam.restore(ckpt.optimizer_steps, ckpt.optimizer);
    for (const auto& e : s.at("log")) restored.log.push_back(epoch_log_from_json(e));
    restored.best_params = std::move(state.best_params);
    state = std::move(restored);
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint training state: ") + e.what());
  }
}

}  // namespace lgsgm
