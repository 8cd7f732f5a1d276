#include "fcqc/regressor.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "fcqc/codecs.hpp"
#include "fcqc/errors.hpp"
#include "fcqc/parallel.hpp"
#include "fcqc/random.hpp"

namespace fcqc {

namespace {

using Net = nn::CompactNet<float>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string format_dims(const std::vector<int>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(dims[i]);
  }
  return out;
}

std::vector<int> parse_dims(std::string_view text) {
  std::vector<int> dims;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('x', start), text.size());
    dims.push_back(static_cast<int>(parse_int(text.substr(start, end - start))));
    start = end + 1;
  }
  return dims;
}

std::string format_triple(const std::array<float, 3>& v) {
  return format_double(v[0]) + "," + format_double(v[1]) + "," + format_double(v[2]);
}

std::array<float, 3> parse_triple(std::string_view text) {
  std::array<float, 3> out{};
  std::size_t start = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t end = i < 2 ? text.find(',', start) : text.size();
    if (end == std::string_view::npos) {
      throw Error(Errc::IncompatibleArtifactVersion, "expected three comma-separated values");
    }
    out[static_cast<std::size_t>(i)] = static_cast<float>(parse_double(text.substr(start, end - start)));
    start = end + 1;
  }
  return out;
}

std::uint64_t weights_digest(std::span<const float> weights) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (float w : weights) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(w);
    for (int b = 0; b < 4; ++b) {
      h ^= bits & 0xFFu;
      h *= 0x100000001B3ULL;
      bits >>= 8;
    }
  }
  return h;
}

const std::string& require(const KeyValues& kv, std::string_view key) {
  const auto it = kv.find(key);
  if (it == kv.end()) {
    throw Error(Errc::IncompatibleArtifactVersion, "model.meta lacks '" + std::string(key) + "'");
  }
  return it->second;
}

// (x - mean) / std per channel into `dst`.
void normalize_into(std::span<const float> src, const std::array<float, 3>& mean,
                    const std::array<float, 3>& inv_std, float* dst) {
  const std::size_t plane = src.size() / 3;
  for (std::size_t c = 0; c < 3; ++c) {
    const float m = mean[c];
    const float s = inv_std[c];
    const float* in = src.data() + c * plane;
    float* out = dst + c * plane;
    for (std::size_t i = 0; i < plane; ++i) out[i] = (in[i] - m) * s;
  }
}

void channel_stats(const TrainingSet& set, std::span<const std::size_t> idx, std::array<float, 3>& mean,
                   std::array<float, 3>& stddev) {
  const std::size_t plane = static_cast<std::size_t>(set.resolution) * set.resolution;
  std::array<double, 3> sum{};
  std::array<double, 3> sq{};
  for (std::size_t i : idx) {
    const auto& t = set.examples[i].tensor;
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      double q = 0.0;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = t[c * plane + k];
        s += v;
        q += v * v;
      }
      sum[c] += s;
      sq[c] += q;
    }
  }
  const double n = static_cast<double>(idx.size() * plane);
  for (std::size_t c = 0; c < 3; ++c) {
    const double m = sum[c] / n;
    const double var = std::max(0.0, sq[c] / n - m * m);
    mean[c] = static_cast<float>(m);
    stddev[c] = static_cast<float>(std::max(std::sqrt(var), 1e-3));
  }
}

std::array<float, 3> inverse(const std::array<float, 3>& v) {
  return {1.0F / v[0], 1.0F / v[1], 1.0F / v[2]};
}

double evaluate_mse(const Net& net, const TrainingSet& set, std::span<const std::size_t> idx,
                    const std::array<float, 3>& mean, const std::array<float, 3>& inv_std) {
  if (idx.empty()) return kNaN;
  Net::Scratch scratch;
  std::vector<float> input(net.input_size());
  double sum = 0.0;
  for (std::size_t i : idx) {
    const auto& ex = set.examples[i];
    normalize_into(ex.tensor, mean, inv_std, input.data());
    const double d = static_cast<double>(net.forward(input.data(), scratch, nullptr)) - ex.label;
    sum += d * d;
  }
  return sum / static_cast<double>(idx.size());
}

void check_label(double label, const std::string& id) {
  if (!std::isfinite(label) || label < 0.0 || label > 1.0) {
    throw Error(Errc::LabelOutOfRange, "label of " + id + " is outside [0, 1]");
  }
}

}  // namespace

std::string_view to_string(TrainableScope scope) noexcept {
  return scope == TrainableScope::All ? "all" : "head-only";
}

TrainableScope parse_trainable_scope(std::string_view text) {
  if (text == "all" || text == "All") return TrainableScope::All;
  if (text == "head-only" || text == "HeadOnly" || text == "head") return TrainableScope::HeadOnly;
  throw Error(Errc::InvalidArgument, "unknown trainable scope '" + std::string(text) + "'");
}

void Hyperparams::validate() const {
  if (epochs < 1) throw Error(Errc::InvalidArgument, "epochs must be >= 1");
  if (batch_size < 1) throw Error(Errc::InvalidArgument, "batch size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(Errc::InvalidArgument, "learning rate must be positive");
  }
  if (input_resolution < 32) throw Error(Errc::InvalidArgument, "input resolution must be >= 32");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw Error(Errc::InvalidArgument, "train fraction must be in (0, 1]");
  }
}

KeyValues Hyperparams::to_key_values(std::string_view prefix) const {
  const std::string p(prefix);
  return {{p + "epochs", std::to_string(epochs)},
          {p + "batch_size", std::to_string(batch_size)},
          {p + "learning_rate", format_double(learning_rate)},
          {p + "input_resolution", std::to_string(input_resolution)},
          {p + "scope", std::string(to_string(scope))},
          {p + "train_fraction", format_double(train_fraction)}};
}

Hyperparams hyperparams_from_key_values(const KeyValues& kv, std::string_view prefix,
                                        const Hyperparams& defaults) {
  Hyperparams hp = defaults;
  const std::string p(prefix);
  const auto get = [&](const char* key) -> const std::string* {
    const auto it = kv.find(p + key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (const auto* v = get("epochs")) hp.epochs = static_cast<int>(parse_int(*v));
  if (const auto* v = get("batch_size")) hp.batch_size = static_cast<int>(parse_int(*v));
  if (const auto* v = get("learning_rate")) hp.learning_rate = parse_double(*v);
  if (const auto* v = get("input_resolution")) hp.input_resolution = static_cast<int>(parse_int(*v));
  if (const auto* v = get("scope")) hp.scope = parse_trainable_scope(*v);
  if (const auto* v = get("train_fraction")) hp.train_fraction = parse_double(*v);
  return hp;
}

void SigmoidParams::validate() const {
  if (!std::isfinite(midpoint)) throw Error(Errc::InvalidArgument, "sigmoid midpoint must be finite");
  if (!(width > 0.0) || !std::isfinite(width)) {
    throw Error(Errc::InvalidArgument, "sigmoid width must be positive");
  }
}

void validate(const ModelArtifact& model) {
  if (model.format_version != kModelFormatVersion) {
    throw Error(Errc::IncompatibleArtifactVersion,
                "unsupported model format version " + std::to_string(model.format_version));
  }
  if (model.architecture_id != nn::kCompactV1) {
    throw Error(Errc::IncompatibleArtifactVersion, "unknown architecture '" + model.architecture_id + "'");
  }
  if (model.input_resolution < 32) {
    throw Error(Errc::IncompatibleArtifactVersion, "input resolution below 32");
  }
  const Net reference(model.input_resolution);
  if (model.layout != reference.layout()) {
    throw Error(Errc::IncompatibleArtifactVersion, "tensor layout does not match " + model.architecture_id);
  }
  if (model.weights.size() != reference.parameters().size()) {
    throw Error(Errc::IncompatibleArtifactVersion, "weight count does not match the layout");
  }
  for (float s : model.channel_std) {
    if (!(s > 0.0F) || !std::isfinite(s)) {
      throw Error(Errc::IncompatibleArtifactVersion, "normalization scale must be positive");
    }
  }
  if (model.sigmoid) model.sigmoid->validate();
}

void save_model(const std::filesystem::path& dir, const ModelArtifact& model) {
  validate(model);
  std::filesystem::create_directories(dir);
  KeyValues kv;
  kv["format_version"] = std::to_string(model.format_version);
  kv["architecture_id"] = model.architecture_id;
  kv["input_resolution"] = std::to_string(model.input_resolution);
  kv["input_size"] = std::to_string(kRegressorInputSize);
  kv["label_kind"] = std::string(to_string(model.label_kind));
  kv["seed"] = std::to_string(model.train_seed);
  kv["tensor_count"] = std::to_string(model.layout.size());
  for (std::size_t i = 0; i < model.layout.size(); ++i) {
    kv["tensor." + std::to_string(i)] = model.layout[i].name + " " + format_dims(model.layout[i].dims);
  }
  kv["norm.mean"] = format_triple(model.channel_mean);
  kv["norm.std"] = format_triple(model.channel_std);
  if (model.sigmoid) {
    kv["sigmoid.midpoint"] = format_double(model.sigmoid->midpoint);
    kv["sigmoid.width"] = format_double(model.sigmoid->width);
  }
  kv["weights.count"] = std::to_string(model.weights.size());
  std::ostringstream digest;
  digest << std::hex << weights_digest(model.weights);
  kv["weights.fnv1a"] = digest.str();

  std::vector<std::uint8_t> blob(model.weights.size() * 4);
  for (std::size_t i = 0; i < model.weights.size(); ++i) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(model.weights[i]);
    for (int b = 0; b < 4; ++b) blob[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  write_file(dir / "weights.bin", blob);
  write_key_values(dir / "model.meta", kv);
}

ModelArtifact load_model(const std::filesystem::path& dir) {
  const KeyValues kv = read_key_values(dir / "model.meta");
  ModelArtifact model;
  try {
    model.format_version = static_cast<int>(parse_int(require(kv, "format_version")));
    if (model.format_version != kModelFormatVersion) {
      throw Error(Errc::IncompatibleArtifactVersion,
                  "unsupported model format version " + std::to_string(model.format_version));
    }
    model.architecture_id = require(kv, "architecture_id");
    model.input_resolution = static_cast<int>(parse_int(require(kv, "input_resolution")));
    if (const auto it = kv.find("input_size");
        it != kv.end() && parse_int(it->second) != kRegressorInputSize) {
      throw Error(Errc::IncompatibleArtifactVersion, "unexpected input size " + it->second);
    }
    model.label_kind = parse_label_kind(require(kv, "label_kind"));
    model.train_seed = std::stoull(require(kv, "seed"));
    const long long count = parse_int(require(kv, "tensor_count"));
    std::size_t offset = 0;
    for (long long i = 0; i < count; ++i) {
      const std::string& spec = require(kv, "tensor." + std::to_string(i));
      const std::size_t space = spec.find(' ');
      if (space == std::string::npos) {
        throw Error(Errc::IncompatibleArtifactVersion, "malformed tensor entry '" + spec + "'");
      }
      nn::TensorInfo t{spec.substr(0, space), parse_dims(std::string_view(spec).substr(space + 1)), offset};
      offset += t.size();
      model.layout.push_back(std::move(t));
    }
    model.channel_mean = parse_triple(require(kv, "norm.mean"));
    model.channel_std = parse_triple(require(kv, "norm.std"));
    const auto m = kv.find("sigmoid.midpoint");
    const auto w = kv.find("sigmoid.width");
    if (m != kv.end() && w != kv.end()) {
      model.sigmoid = SigmoidParams{parse_double(m->second), parse_double(w->second)};
    }
    const auto blob = read_file(dir / "weights.bin");
    const std::size_t expected = static_cast<std::size_t>(parse_int(require(kv, "weights.count")));
    if (blob.size() != expected * 4) {
      throw Error(Errc::IncompatibleArtifactVersion, "weights.bin has " + std::to_string(blob.size()) +
                                                         " bytes, expected " + std::to_string(expected * 4));
    }
    model.weights.resize(expected);
    for (std::size_t i = 0; i < expected; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(blob[i * 4 + b]) << (8 * b);
      model.weights[i] = std::bit_cast<float>(bits);
    }
    std::ostringstream digest;
    digest << std::hex << weights_digest(model.weights);
    if (digest.str() != require(kv, "weights.fnv1a")) {
      throw Error(Errc::IncompatibleArtifactVersion, "weights.bin does not match its recorded digest");
    }
  } catch (const Error& e) {
    if (e.code() == Errc::IncompatibleArtifactVersion || e.code() == Errc::Io) throw;
    throw Error(Errc::IncompatibleArtifactVersion, e.what());
  }
  validate(model);
  return model;
}

std::vector<float> resize_to_tensor(const ImageBuffer& img, int size) {
  validate(img);
  if (size < 1) throw Error(Errc::InvalidDimensions, "tensor size must be >= 1");
  struct Tap {
    int i0, i1;
    float f;
  };
  const auto taps = [size](int extent) {
    std::vector<Tap> out(static_cast<std::size_t>(size));
    const double scale = static_cast<double>(extent) / size;
    for (int k = 0; k < size; ++k) {
      const double s = std::clamp((k + 0.5) * scale - 0.5, 0.0, static_cast<double>(extent - 1));
      const int i0 = static_cast<int>(std::floor(s));
      out[static_cast<std::size_t>(k)] = {i0, std::min(i0 + 1, extent - 1), static_cast<float>(s - i0)};
    }
    return out;
  };
  const auto tx = taps(img.width);
  const auto ty = taps(img.height);
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::vector<float> out(3 * plane);
  constexpr float kScale = 1.0F / 255.0F;
  for (int y = 0; y < size; ++y) {
    const Tap& v = ty[static_cast<std::size_t>(y)];
    const std::uint8_t* r0 = img.pixels.data() + static_cast<std::size_t>(v.i0) * img.width * 3;
    const std::uint8_t* r1 = img.pixels.data() + static_cast<std::size_t>(v.i1) * img.width * 3;
    for (int x = 0; x < size; ++x) {
      const Tap& u = tx[static_cast<std::size_t>(x)];
      for (int c = 0; c < 3; ++c) {
        const float top = r0[u.i0 * 3 + c] + (r0[u.i1 * 3 + c] - r0[u.i0 * 3 + c]) * u.f;
        const float bottom = r1[u.i0 * 3 + c] + (r1[u.i1 * 3 + c] - r1[u.i0 * 3 + c]) * u.f;
        out[c * plane + static_cast<std::size_t>(y) * size + x] = (top + (bottom - top) * v.f) * kScale;
      }
    }
  }
  return out;
}

TrainingSet make_training_set(std::span<const LabeledImage> images, int resolution, LabelKind kind,
                              int workers) {
  if (images.empty()) throw Error(Errc::EmptyManifest, "no training images");
  if (resolution < 32) throw Error(Errc::InvalidArgument, "input resolution must be >= 32");
  for (const auto& im : images) {
    check_label(im.label, im.sample_id);
    if (im.image.width != kRegressorInputSize || im.image.height != kRegressorInputSize) {
      throw Error(Errc::ShapeMismatch, im.sample_id + " is not " + std::to_string(kRegressorInputSize) +
                                           "x" + std::to_string(kRegressorInputSize));
    }
  }
  TrainingSet set;
  set.resolution = resolution;
  set.label_kind = kind;
  set.examples.resize(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) {
    const auto& im = images[i];
    set.examples[i] = {im.sample_id, im.source_id, im.label, resize_to_tensor(im.image, resolution)};
  });
  return set;
}

TrainingSet load_training_set(std::span<const LabeledRecord> records, const std::filesystem::path& root,
                              int resolution, int workers) {
  if (records.empty()) throw Error(Errc::EmptyManifest, "labeled manifest is empty");
  if (resolution < 32) throw Error(Errc::InvalidArgument, "input resolution must be >= 32");
  for (const auto& r : records) check_label(r.label, r.record.sample_id);
  TrainingSet set;
  set.resolution = resolution;
  set.label_kind = records.front().kind;
  set.examples.resize(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    const auto& r = records[i];
    const ImageBuffer img = read_image(root / r.record.output_path);
    if (img.width != kRegressorInputSize || img.height != kRegressorInputSize) {
      throw Error(Errc::ShapeMismatch, r.record.sample_id + " is not " +
                                           std::to_string(kRegressorInputSize) + "x" +
                                           std::to_string(kRegressorInputSize));
    }
    set.examples[i] = {r.record.sample_id, r.record.source_id, r.label, resize_to_tensor(img, resolution)};
  });
  return set;
}

SourceSplit split_by_source(const TrainingSet& set, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw Error(Errc::InvalidArgument, "train fraction must be in (0, 1]");
  }
  std::set<std::string> unique;
  for (const auto& ex : set.examples) unique.insert(ex.source_id);
  std::vector<std::string> sources(unique.begin(), unique.end());
  std::mt19937_64 rng(splitmix64(seed ^ 0x5B1D5EEDULL));
  shuffle(rng, sources);
  std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * sources.size()));
  n_train = std::clamp<std::size_t>(n_train, 1, sources.size());
  const std::set<std::string> train_sources(sources.begin(), sources.begin() + n_train);
  SourceSplit split;
  for (std::size_t i = 0; i < set.examples.size(); ++i) {
    (train_sources.count(set.examples[i].source_id) ? split.train : split.validation).push_back(i);
  }
  return split;
}

TrainResult train_on(const TrainingSet& set, std::span<const std::size_t> train_idx,
                     std::span<const std::size_t> validation_idx, const Hyperparams& hp,
                     std::uint64_t seed, const TrainOptions& options) {
  hp.validate();
  if (set.examples.empty() || train_idx.empty()) throw Error(Errc::EmptyManifest, "no training examples");
  if (set.resolution != hp.input_resolution) {
    throw Error(Errc::ShapeMismatch, "training set resolution " + std::to_string(set.resolution) +
                                         " differs from input resolution " +
                                         std::to_string(hp.input_resolution));
  }
  for (std::size_t i : train_idx) check_label(set.examples.at(i).label, set.examples[i].sample_id);
  const auto started = std::chrono::steady_clock::now();

  TrainResult result;
  ModelArtifact& model = result.model;
  TrainingReport& report = result.report;
  model.input_resolution = hp.input_resolution;
  model.train_seed = seed;
  model.label_kind = set.label_kind;
  channel_stats(set, train_idx, model.channel_mean, model.channel_std);
  const auto inv_std = inverse(model.channel_std);

  Net net(hp.input_resolution);
  net.initialize(seed);
  report.train_count = train_idx.size();
  report.validation_count = validation_idx.size();
  report.initial_train_mse =
      options.evaluate_train ? evaluate_mse(net, set, train_idx, model.channel_mean, inv_std) : kNaN;

  const bool head_only = hp.scope == TrainableScope::HeadOnly;
  const std::size_t first_trainable = head_only ? net.head_offset() : 0;
  nn::Adam<float> adam(net.parameters().size(), hp.learning_rate);
  std::vector<float> grad(net.parameters().size());
  std::vector<float> input(net.input_size());
  Net::Scratch scratch;
  Net::Trace trace;
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  const std::size_t batch = static_cast<std::size_t>(hp.batch_size);
  bool first_batch = true;

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    std::mt19937_64 rng(splitmix64(seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1)));
    shuffle(rng, order);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const float scale = 2.0F / static_cast<float>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0F);
      double batch_sum = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = set.examples[order[k]];
        normalize_into(ex.tensor, model.channel_mean, inv_std, input.data());
        const float y = net.forward(input.data(), scratch, &trace);
        const float d = y - static_cast<float>(ex.label);
        batch_sum += static_cast<double>(d) * d;
        net.backward(trace, scale * d, grad, scratch, head_only);
      }
      if (first_batch) {
        report.first_batch_loss = batch_sum / static_cast<double>(end - start);
        first_batch = false;
      }
      epoch_sum += batch_sum;
      adam.step(net.parameters(), grad, first_trainable);
    }
    report.epoch_loss.push_back(epoch_sum / static_cast<double>(order.size()));
    if (options.on_epoch) options.on_epoch(epoch + 1, report.epoch_loss.back());
  }

  report.final_train_mse =
      options.evaluate_train ? evaluate_mse(net, set, train_idx, model.channel_mean, inv_std) : kNaN;
  report.validation_mse = evaluate_mse(net, set, validation_idx, model.channel_mean, inv_std);
  model.layout = net.layout();
  model.weights.assign(net.parameters().begin(), net.parameters().end());
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

TrainResult train(const TrainingSet& set, const Hyperparams& hp, std::uint64_t seed,
                  const TrainOptions& options) {
  hp.validate();
  if (set.examples.empty()) throw Error(Errc::EmptyManifest, "no training examples");
  const SourceSplit split = split_by_source(set, hp.train_fraction, seed);
  return train_on(set, split.train, split.validation, hp, seed, options);
}

GridSearchResult grid_search(std::span<const Hyperparams> grid, const TrainingSetLoader& loader,
                             std::uint64_t seed) {
  if (grid.empty()) throw Error(Errc::EmptyGrid, "hyperparameter grid is empty");
  for (const auto& hp : grid) hp.validate();
  std::map<int, TrainingSet> sets;
  GridSearchResult result;
  TrainOptions options;
  options.evaluate_train = false;
  for (const auto& hp : grid) {
    auto it = sets.find(hp.input_resolution);
    if (it == sets.end()) it = sets.emplace(hp.input_resolution, loader(hp.input_resolution)).first;
    const TrainingSet& set = it->second;
    const SourceSplit split = split_by_source(set, 0.8, seed);
    const TrainResult trained = train_on(set, split.train, split.validation, hp, seed, options);
    GridCandidate c;
    c.hp = hp;
    c.validation_mse = std::isnan(trained.report.validation_mse)
                           ? std::numeric_limits<double>::infinity()
                           : trained.report.validation_mse;
    c.cost = static_cast<double>(hp.epochs) * static_cast<double>(split.train.size()) *
             hp.input_resolution * hp.input_resolution;
    result.candidates.push_back(c);
  }
  double best_mse = std::numeric_limits<double>::infinity();
  for (const auto& c : result.candidates) best_mse = std::min(best_mse, c.validation_mse);
  const GridCandidate* best = nullptr;
  for (const auto& c : result.candidates) {
    const bool near = std::isinf(best_mse) ? true : c.validation_mse <= best_mse * 1.01;
    if (!near) continue;
    if (!best || c.cost < best->cost) best = &c;
  }
  result.best = best->hp;
  return result;
}

Predictor::Predictor(const ModelArtifact& model) : net_((validate(model), model.input_resolution)) {
  std::copy(model.weights.begin(), model.weights.end(), net_.parameters().begin());
  mean_ = model.channel_mean;
  inv_std_ = inverse(model.channel_std);
}

double Predictor::predict(const ImageBuffer& img) const {
  validate(img);
  if (img.width != kRegressorInputSize || img.height != kRegressorInputSize) {
    throw Error(Errc::ShapeMismatch, "regressor input must be " + std::to_string(kRegressorInputSize) + "x" +
                                         std::to_string(kRegressorInputSize));
  }
  return predict_tensor(resize_to_tensor(img, net_.resolution()));
}

double Predictor::predict_tensor(std::span<const float> tensor) const {
  if (tensor.size() != net_.input_size()) throw Error(Errc::ShapeMismatch, "tensor size mismatch");
  std::vector<float> input(tensor.size());
  normalize_into(tensor, mean_, inv_std_, input.data());
  Net::Scratch scratch;
  return net_.forward(input.data(), scratch, nullptr);
}

double predict_raw(const ModelArtifact& model, const ImageBuffer& img) { return Predictor(model).predict(img); }

SigmoidParams calibrate_sigmoid(std::span<const double> raw_scores) {
  std::vector<double> v;
  v.reserve(raw_scores.size());
  for (double s : raw_scores) {
    if (std::isfinite(s)) v.push_back(s);
  }
  if (v.size() < 10) throw Error(Errc::DegenerateDistribution, "need at least 10 finite scores");
  std::sort(v.begin(), v.end());
  if (v.front() == v.back()) throw Error(Errc::DegenerateDistribution, "all scores are equal");
  const auto quantile = [&v](double p) {
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  SigmoidParams p;
  p.midpoint = quantile(0.5);
  p.width = std::max(1e-6, (quantile(0.75) - quantile(0.25)) / 2.0);
  return p;
}

int map_quality(double raw, const SigmoidParams& p) {
  if (std::isnan(raw)) return 0;
  const double q = 100.0 / (1.0 + std::exp(-(raw - p.midpoint) / p.width));
  return static_cast<int>(std::clamp(std::round(q), 0.0, 100.0));
}

void write_scores(const std::filesystem::path& path, std::span<const ScoreRecord> scores) {
  CsvTable table;
  table.header = {"sample_id", "raw_score", "quality"};
  for (const auto& s : scores) {
    table.rows.push_back({s.sample_id, format_double(s.raw_score),
                          s.quality ? std::to_string(*s.quality) : std::string()});
  }
  write_csv(path, table);
}

std::vector<ScoreRecord> read_scores(const std::filesystem::path& path) {
  const CsvTable table = read_csv(path);
  const std::size_t id = table.column("sample_id");
  const std::size_t raw = table.column("raw_score");
  const auto quality = table.find_column("quality");
  std::vector<ScoreRecord> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    ScoreRecord r;
    r.sample_id = row[id];
    r.raw_score = parse_double(row[raw]);
    if (quality && !row[*quality].empty()) r.quality = static_cast<int>(parse_int(row[*quality]));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fcqc
