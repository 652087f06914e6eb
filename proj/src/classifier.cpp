#include "vcd/classifier.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "vcd/error.hpp"
#include "vcd/seed.hpp"

namespace vcd {
namespace {

constexpr const char* kModule = "classifier";
constexpr char kMagic[4] = {'M', 'D', '0', '1'};
constexpr double kFdStep = 1e-5;
constexpr std::size_t kCheckedCoordinates = 100;

bool all_finite(const auto& m) { return m.allFinite(); }

/// Row-wise log-softmax cross-entropy for a batch of logits.
double batch_loss(const Matrix& z, std::span<const std::size_t> targets) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    total += lse - z(i, static_cast<Eigen::Index>(targets[static_cast<std::size_t>(i)]));
  }
  return total;
}

Matrix normalize_inputs(const ClassifierModel& model, const Matrix& x) {
  return ((x.rowwise() - model.input_shift.transpose()).array().rowwise() *
          model.input_scale.transpose().array())
      .matrix();
}

Matrix forward_logits(const ClassifierModel& model, const Matrix& normalized, Matrix* hidden) {
  Matrix h = ((normalized * model.w1).rowwise() + model.b1.transpose()).array().tanh().matrix();
  Matrix z = (h * model.w2).rowwise() + model.b2.transpose();
  if (hidden) *hidden = std::move(h);
  return z;
}

double mean_loss(const ClassifierModel& model, const Matrix& normalized,
                 std::span<const std::size_t> targets) {
  return batch_loss(forward_logits(model, normalized, nullptr), targets) /
         static_cast<double>(normalized.rows());
}

// --- little-endian serialization ---------------------------------------------------

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), c, c + n);
  }
  void u16(std::uint16_t v) { uint(v, 2); }
  void u32(std::uint32_t v) { uint(v, 4); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v), 8); }
  void values(const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) f64(m.data()[i]);
  }
  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  void uint(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> in) : in_(in) {}
  std::uint64_t uint(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint(8)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void values(auto& m) {
    need(static_cast<std::size_t>(m.size()) * 8);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = f64();
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw Error(kModule, "truncated", "model file ends early");
  }
  std::span<const unsigned char> in_;
  std::size_t pos_ = 0;
};

}  // namespace

void validate(const ClassifierModel& m) {
  const Eigen::Index f = m.w1.rows(), h = m.w1.cols(), c = m.w2.cols();
  if (m.labels.size() < 2) throw Error(kModule, "invalid_model", "model needs >= 2 labels");
  if (f < 1 || h < 1 || m.b1.size() != h || m.w2.rows() != h || m.b2.size() != c ||
      c != static_cast<Eigen::Index>(m.labels.size()) || m.input_shift.size() != f ||
      m.input_scale.size() != f) {
    throw Error(kModule, "invalid_model", "inconsistent model dimensions");
  }
  if (!all_finite(m.w1) || !all_finite(m.b1) || !all_finite(m.w2) || !all_finite(m.b2) ||
      !all_finite(m.input_shift) || !all_finite(m.input_scale)) {
    throw Error(kModule, "invalid_model", "model contains non-finite values");
  }
}

ClassifierModel init_model(LabelSet labels, Eigen::Index feature_dim, Eigen::Index hidden_dim,
                           std::uint64_t seed) {
  if (feature_dim < 1 || hidden_dim < 1) {
    throw Error(kModule, "invalid_config", "feature and hidden dims must be >= 1");
  }
  const auto classes = static_cast<Eigen::Index>(labels.size());
  ClassifierModel m;
  m.labels = std::move(labels);
  std::mt19937_64 rng(derive_seed(seed, "init"));
  auto uniform = [&](Matrix& w, Eigen::Index rows, Eigen::Index cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    std::uniform_real_distribution<double> dist(-bound, bound);
    w.resize(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  };
  uniform(m.w1, feature_dim, hidden_dim);
  uniform(m.w2, hidden_dim, classes);
  m.b1 = Vector::Zero(hidden_dim);
  m.b2 = Vector::Zero(classes);
  m.input_shift = Vector::Zero(feature_dim);
  m.input_scale = Vector::Ones(feature_dim);
  validate(m);
  return m;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    throw Error(kModule, "invalid_config", "learning rate must be finite and >= 0");
  }
  if (cfg.epochs < 1) throw Error(kModule, "invalid_config", "epochs must be >= 1");
  if (cfg.batch_size < 1) throw Error(kModule, "invalid_config", "batch size must be >= 1");
  if (cfg.hidden_dim < 1) throw Error(kModule, "invalid_config", "hidden dim must be >= 1");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw Error(kModule, "invalid_config", "momentum must be in [0, 1)");
  }
}

int default_epochs(const Dataset& train_set) {
  const bool derived = std::any_of(train_set.begin(), train_set.end(),
                                   [](const UtteranceRecord& r) { return !r.provenance.is_natural(); });
  return derived ? 3 : 6;
}

Vector pool(const FeatureSequence& feat) {
  validate(feat);
  return feat.frames.colwise().mean().transpose();
}

Matrix pool_dataset(const Dataset& data, const FeatureTable& features) {
  Matrix out;
  Eigen::Index row = 0;
  for (const auto& rec : data) {
    auto it = features.find(rec.id);
    if (it == features.end()) {
      throw Error(kModule, "missing_features", "no features for record '" + rec.id + "'", rec.id);
    }
    Vector v;
    try {
      v = pool(it->second);
    } catch (const Error& e) {
      throw Error(kModule, e.code(), "record '" + rec.id + "': " + e.message(), rec.id);
    }
    if (row == 0) out.resize(static_cast<Eigen::Index>(data.size()), v.size());
    if (v.size() != out.cols()) {
      throw Error(kModule, "dimension_mismatch",
                  "record '" + rec.id + "' has dim " + std::to_string(v.size()) + ", expected " +
                      std::to_string(out.cols()),
                  rec.id);
    }
    out.row(row++) = v.transpose();
  }
  return out;
}

TrainResult train(const Dataset& data, const FeatureTable& features, const TrainConfig& cfg) {
  if (data.empty()) throw Error(kModule, "empty_training_set", "no training records");
  const Matrix inputs = pool_dataset(data, features);
  std::vector<std::size_t> targets;
  targets.reserve(data.size());
  for (const auto& rec : data) targets.push_back(data.label_index(rec));
  return train_pooled(inputs, targets, data.labels(), cfg);
}

TrainResult train_pooled(const Matrix& inputs, std::span<const std::size_t> targets,
                         const LabelSet& labels, const TrainConfig& cfg) {
  validate(cfg);
  const Eigen::Index n = inputs.rows();
  if (n == 0) throw Error(kModule, "empty_training_set", "no training records");
  if (static_cast<std::size_t>(n) != targets.size()) {
    throw Error(kModule, "invalid_input", "inputs and targets differ in length");
  }
  for (std::size_t t : targets) {
    if (t >= labels.size()) throw Error(kModule, "invalid_input", "target index out of range");
  }

  TrainResult result;
  ClassifierModel& m = result.model;
  m = init_model(labels, inputs.cols(), cfg.hidden_dim, cfg.seed);
  if (cfg.standardize) {
    m.input_shift = inputs.colwise().mean().transpose();
    const Vector var =
        (inputs.rowwise() - m.input_shift.transpose()).array().square().colwise().mean().transpose();
    m.input_scale = (var.array().sqrt() + 1e-8).inverse().matrix();
  }
  const Matrix x = normalize_inputs(m, inputs);

  Matrix vw1 = Matrix::Zero(m.w1.rows(), m.w1.cols());
  Matrix vw2 = Matrix::Zero(m.w2.rows(), m.w2.cols());
  Vector vb1 = Vector::Zero(m.b1.size());
  Vector vb2 = Vector::Zero(m.b2.size());

  result.loss_trace.push_back(mean_loss(m, x, targets));
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0, b = 0; start < order.size(); start += batch, ++b) {
      const std::size_t size = std::min(batch, order.size() - start);
      Matrix xb(static_cast<Eigen::Index>(size), x.cols());
      std::vector<std::size_t> yb(size);
      for (std::size_t i = 0; i < size; ++i) {
        xb.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[start + i]));
        yb[i] = targets[order[start + i]];
      }
      Matrix h;
      Matrix z = forward_logits(m, xb, &h);
      const double loss = batch_loss(z, yb);
      if (!std::isfinite(loss)) {
        throw Error(kModule, "nan_loss",
                    "non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
      }
      // dL/dz for the batch-mean cross-entropy.
      Matrix d(z.rows(), z.cols());
      for (Eigen::Index i = 0; i < z.rows(); ++i) d.row(i) = softmax(z.row(i).transpose()).transpose();
      for (std::size_t i = 0; i < size; ++i) d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(yb[i])) -= 1.0;
      d /= static_cast<double>(size);

      const Matrix gw2 = h.transpose() * d;
      const Vector gb2 = d.colwise().sum().transpose();
      const Matrix dh = ((d * m.w2.transpose()).array() * (1.0 - h.array().square())).matrix();
      const Matrix gw1 = xb.transpose() * dh;
      const Vector gb1 = dh.colwise().sum().transpose();

      vw1 = cfg.momentum * vw1 - cfg.learning_rate * gw1;
      vb1 = cfg.momentum * vb1 - cfg.learning_rate * gb1;
      vw2 = cfg.momentum * vw2 - cfg.learning_rate * gw2;
      vb2 = cfg.momentum * vb2 - cfg.learning_rate * gb2;
      m.w1 += vw1;
      m.b1 += vb1;
      m.w2 += vw2;
      m.b2 += vb2;
    }
    const double epoch_loss = mean_loss(m, x, targets);
    if (!std::isfinite(epoch_loss)) {
      throw Error(kModule, "nan_loss", "non-finite loss after epoch " + std::to_string(epoch));
    }
    result.loss_trace.push_back(epoch_loss);
  }
  validate(m);
  return result;
}

Vector softmax(const Vector& z) {
  const Vector e = (z.array() - z.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Vector logits(const ClassifierModel& model, const Vector& pooled) {
  if (pooled.size() != model.feature_dim()) {
    throw Error(kModule, "dimension_mismatch",
                "input dim " + std::to_string(pooled.size()) + " vs model dim " +
                    std::to_string(model.feature_dim()));
  }
  const Vector x = (pooled - model.input_shift).cwiseProduct(model.input_scale);
  const Vector h = (model.w1.transpose() * x + model.b1).array().tanh().matrix();
  return model.w2.transpose() * h + model.b2;
}

Prediction predict_pooled(const ClassifierModel& model, const Vector& pooled) {
  Prediction p;
  p.probabilities = softmax(logits(model, pooled));
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.probabilities.size(); ++i) {
    if (p.probabilities[i] > p.probabilities[best]) best = i;
  }
  p.index = static_cast<std::size_t>(best);
  p.label = model.labels.name(p.index);
  return p;
}

Prediction predict(const ClassifierModel& model, const FeatureSequence& feat) {
  return predict_pooled(model, pool(feat));
}

double loss_and_gradients(const ClassifierModel& model, const Vector& pooled, std::size_t label,
                          Gradients* grad) {
  if (label >= model.labels.size()) throw Error(kModule, "invalid_input", "label index out of range");
  if (pooled.size() != model.feature_dim()) {
    throw Error(kModule, "dimension_mismatch", "input dim does not match model");
  }
  const Vector x = (pooled - model.input_shift).cwiseProduct(model.input_scale);
  const Vector h = (model.w1.transpose() * x + model.b1).array().tanh().matrix();
  const Vector z = model.w2.transpose() * h + model.b2;
  const double m = z.maxCoeff();
  const double loss = m + std::log((z.array() - m).exp().sum()) - z[static_cast<Eigen::Index>(label)];
  if (grad) {
    Vector d = softmax(z);
    d[static_cast<Eigen::Index>(label)] -= 1.0;
    grad->w2 = h * d.transpose();
    grad->b2 = d;
    const Vector dh = (model.w2 * d).cwiseProduct((1.0 - h.array().square()).matrix());
    grad->w1 = x * dh.transpose();
    grad->b1 = dh;
  }
  return loss;
}

double grad_check(const ClassifierModel& model, const Vector& pooled, std::size_t label,
                  std::uint64_t seed) {
  validate(model);
  Gradients g;
  loss_and_gradients(model, pooled, label, &g);

  // Flat coordinate space: w1 | b1 | w2 | b2.
  const std::size_t n1 = static_cast<std::size_t>(model.w1.size());
  const std::size_t n2 = n1 + static_cast<std::size_t>(model.b1.size());
  const std::size_t n3 = n2 + static_cast<std::size_t>(model.w2.size());
  const std::size_t total = n3 + static_cast<std::size_t>(model.b2.size());
  auto coordinate = [&](ClassifierModel& m, std::size_t i) -> double& {
    if (i < n1) return m.w1.data()[i];
    if (i < n2) return m.b1.data()[i - n1];
    if (i < n3) return m.w2.data()[i - n2];
    return m.b2.data()[i - n3];
  };
  auto analytic = [&](std::size_t i) {
    if (i < n1) return g.w1.data()[i];
    if (i < n2) return g.b1.data()[i - n1];
    if (i < n3) return g.w2.data()[i - n2];
    return g.b2.data()[i - n3];
  };

  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(seed, "grad_check"));
  std::shuffle(coords.begin(), coords.end(), rng);
  coords.resize(std::min(total, kCheckedCoordinates));

  ClassifierModel probe = model;
  double worst = 0.0;
  for (std::size_t i : coords) {
    double& p = coordinate(probe, i);
    const double original = p;
    p = original + kFdStep;
    const double up = loss_and_gradients(probe, pooled, label, nullptr);
    p = original - kFdStep;
    const double down = loss_and_gradients(probe, pooled, label, nullptr);
    p = original;
    const double numeric = (up - down) / (2.0 * kFdStep);
    const double a = analytic(i);
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

// --- model files -------------------------------------------------------------------

std::vector<unsigned char> encode_model(const ClassifierModel& model) {
  validate(model);
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(model.labels.size()));
  for (const auto& name : model.labels.names()) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
  }
  w.u32(static_cast<std::uint32_t>(model.feature_dim()));
  w.u32(static_cast<std::uint32_t>(model.hidden_dim()));
  w.u32(static_cast<std::uint32_t>(model.num_classes()));
  w.values(model.w1);
  w.values(model.b1);
  w.values(model.w2);
  w.values(model.b2);
  w.values(model.input_shift);
  w.values(model.input_scale);
  return w.take();
}

ClassifierModel decode_model(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw Error(kModule, "bad_magic", "not an MD01 model file");
  }
  Reader r(bytes.subspan(4));
  const auto n_labels = r.uint(4);
  if (n_labels > r.remaining()) throw Error(kModule, "truncated", "label list ends early");
  std::vector<std::string> names;
  for (std::uint64_t i = 0; i < n_labels; ++i) names.push_back(r.str(r.uint(2)));
  const auto f = static_cast<Eigen::Index>(r.uint(4));
  const auto h = static_cast<Eigen::Index>(r.uint(4));
  const auto c = static_cast<Eigen::Index>(r.uint(4));
  const auto params = static_cast<double>(f) * h + h + static_cast<double>(h) * c + c + 2.0 * f;
  if (params * 8 > static_cast<double>(r.remaining())) {
    throw Error(kModule, "truncated", "weights end early");
  }
  ClassifierModel m;
  try {
    m.labels = LabelSet(std::move(names));
  } catch (const Error& e) {
    throw Error(kModule, "invalid_model", e.what());
  }
  m.w1.resize(f, h);
  m.b1.resize(h);
  m.w2.resize(h, c);
  m.b2.resize(c);
  m.input_shift.resize(f);
  m.input_scale.resize(f);
  r.values(m.w1);
  r.values(m.b1);
  r.values(m.w2);
  r.values(m.b2);
  r.values(m.input_shift);
  r.values(m.input_scale);
  if (r.remaining() != 0) throw Error(kModule, "trailing_bytes", "unexpected data after weights");
  validate(m);
  return m;
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  const auto bytes = encode_model(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(kModule, "write_failed", "cannot write " + path.string(), path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(kModule, "write_failed", "short write to " + path.string(), path.string());
}

ClassifierModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(kModule, "missing_file", "cannot open " + path.string(), path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

void save_loss_trace(std::span<const double> trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(kModule, "write_failed", "cannot write " + path.string(), path.string());
  out << std::setprecision(17);
  for (std::size_t i = 0; i < trace.size(); ++i) out << i << ' ' << trace[i] << '\n';
}

}  // namespace vcd
