#include "nesy/perception.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace nesy {

void MlpModel::validate() const {
  if (cells < 1 || input < 1 || output < 1) throw Error(ErrorKind::ShapeMismatch, "mlp: empty dimensions");
  if (weights.empty() || weights.size() != biases.size())
    throw Error(ErrorKind::ShapeMismatch, "mlp: weight and bias lists disagree");
  Eigen::Index width = input;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].cols() != width || biases[l].size() != weights[l].rows())
      throw Error(ErrorKind::ShapeMismatch, "mlp: layer " + std::to_string(l) + " has incompatible shape");
    width = weights[l].rows();
  }
  if (width != output) throw Error(ErrorKind::ShapeMismatch, "mlp: last layer width differs from output");
}

MlpModel init_mlp(RngState& rng, int cells, int input, const std::vector<int>& hidden, int output, HeadKind head) {
  MlpModel m;
  m.cells = cells;
  m.input = input;
  m.output = output;
  m.head = head;
  std::vector<int> widths{input};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(output);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const double limit = std::sqrt(6.0 / widths[l]);
    m.weights.push_back(uniform_matrix(rng, widths[l + 1], widths[l], -limit, limit));
    m.biases.push_back(Vector::Zero(widths[l + 1]));
  }
  m.validate();
  return m;
}

double MlpGradient::squared_norm() const {
  double s = 0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : biases) s += b.squaredNorm();
  return s;
}

MlpGradient zero_gradient(const MlpModel& model) {
  MlpGradient g;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    g.weights.push_back(Matrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
    g.biases.push_back(Vector::Zero(model.biases[l].size()));
  }
  return g;
}

namespace {

// Samples x (cells * input) become (samples * cells) x input, cell-major within a sample.
Matrix to_cells(const Matrix& X, int cells, int width) {
  Matrix C(X.rows() * cells, width);
  for (Eigen::Index n = 0; n < X.rows(); ++n)
    for (int c = 0; c < cells; ++c) C.row(n * cells + c) = X.row(n).segment(c * width, width);
  return C;
}

Matrix from_cells(const Matrix& C, int cells, int width) {
  Matrix X(C.rows() / cells, cells * width);
  for (Eigen::Index n = 0; n < X.rows(); ++n)
    for (int c = 0; c < cells; ++c) X.row(n).segment(c * width, width) = C.row(n * cells + c);
  return X;
}

struct Activations {
  std::vector<Matrix> pre;   // pre-activation of every layer
  std::vector<Matrix> post;  // post[0] is the input
};

Activations run_forward(const MlpModel& m, const Matrix& C) {
  Activations a;
  a.post.push_back(C);
  const std::size_t L = m.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    Matrix z = a.post.back() * m.weights[l].transpose();
    z.rowwise() += m.biases[l].transpose();
    a.pre.push_back(z);
    if (l + 1 < L) {
      a.post.push_back(z.cwiseMax(0.0));
    } else if (m.head == HeadKind::Softmax) {
      Matrix p = z;
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double top = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - top).exp().matrix();
        p.row(r) /= p.row(r).sum();
      }
      a.post.push_back(p);
    } else {
      a.post.push_back((1.0 / (1.0 + (-z.array()).exp())).matrix());
    }
  }
  return a;
}

void check_input(const MlpModel& m, Eigen::Index cols) {
  if (cols != m.input_dim()) throw Error(ErrorKind::ShapeMismatch, "mlp: input has the wrong width");
}

}  // namespace

Matrix forward_batch(const MlpModel& model, const Matrix& X) {
  check_input(model, X.cols());
  return from_cells(run_forward(model, to_cells(X, model.cells, model.input)).post.back(), model.cells, model.output);
}

Vector forward(const MlpModel& model, const Vector& x) {
  return forward_batch(model, x.transpose()).row(0).transpose();
}

MlpGradient batch_gradient(const MlpModel& model, const Matrix& X, const Matrix& targets, double* loss) {
  check_input(model, X.cols());
  if (targets.rows() != X.rows() || targets.cols() != model.output_dim())
    throw Error(ErrorKind::ShapeMismatch, "mlp: target has the wrong shape");
  const Activations a = run_forward(model, to_cells(X, model.cells, model.input));
  const Matrix& p = a.post.back();
  const Matrix T = to_cells(targets, model.cells, model.output);
  const double scale = X.rows() > 0 ? 1.0 / static_cast<double>(X.rows()) : 0.0;
  if (loss) *loss = (p - T).squaredNorm() * scale;

  Matrix g = 2.0 * scale * (p - T);  // dL/dp
  Matrix delta;
  if (model.head == HeadKind::Softmax) {
    const Vector inner = (g.cwiseProduct(p)).rowwise().sum();
    delta = p.cwiseProduct(g - inner.replicate(1, g.cols()));
  } else {
    delta = g.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
  }
  MlpGradient grad = zero_gradient(model);
  for (std::size_t l = model.weights.size(); l-- > 0;) {
    grad.weights[l] = delta.transpose() * a.post[l];
    grad.biases[l] = delta.colwise().sum().transpose();
    if (l == 0) break;
    delta = (delta * model.weights[l]).cwiseProduct((a.pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return grad;
}

MlpGradient backward_mse(const MlpModel& model, const Vector& x, const Vector& target) {
  return batch_gradient(model, x.transpose(), target.transpose());
}

MlpModel sgd_step(MlpModel model, const MlpGradient& grad, double eta) {
  if (!(eta > 0)) throw Error(ErrorKind::InvalidArgument, "sgd_step: eta must be > 0");
  if (grad.weights.size() != model.weights.size())
    throw Error(ErrorKind::ShapeMismatch, "sgd_step: gradient does not match the model");
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    model.weights[l] -= eta * grad.weights[l];
    model.biases[l] -= eta * grad.biases[l];
  }
  return model;
}

double mse_loss(const MlpModel& model, const Matrix& X, const Matrix& targets) {
  if (X.rows() == 0) return 0;
  return (forward_batch(model, X) - targets).squaredNorm() / static_cast<double>(X.rows());
}

double gradient_check(const MlpModel& model, const Vector& x, const Vector& target, double h, double floor) {
  const MlpGradient g = backward_mse(model, x, target);
  const Matrix X = x.transpose();
  const Matrix T = target.transpose();
  MlpModel probe = model;
  double worst = 0;
  auto check = [&](double& param, double analytic) {
    const double saved = param;
    param = saved + h;
    const double up = mse_loss(probe, X, T);
    param = saved - h;
    const double down = mse_loss(probe, X, T);
    param = saved;
    const double numeric = (up - down) / (2 * h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic - numeric) / denom);
  };
  for (std::size_t l = 0; l < probe.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < probe.weights[l].size(); ++i) check(probe.weights[l].data()[i], g.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < probe.biases[l].size(); ++i) check(probe.biases[l](i), g.biases[l](i));
  }
  return worst;
}

namespace {

double min_hidden_preactivation(const MlpModel& model, const Vector& x) {
  double smallest = std::numeric_limits<double>::infinity();
  for (int c = 0; c < model.cells; ++c) {
    Vector a = x.segment(static_cast<Eigen::Index>(c) * model.input, model.input);
    for (std::size_t l = 0; l + 1 < model.weights.size(); ++l) {
      const Vector z = model.weights[l] * a + model.biases[l];
      smallest = std::min(smallest, z.cwiseAbs().minCoeff());
      a = z.cwiseMax(0.0);
    }
  }
  return smallest;
}

}  // namespace

std::vector<double> gradient_suite(std::uint64_t seed, int nets) {
  std::vector<double> errors;
  const RngState root(seed);
  for (int k = 0; k < nets; ++k) {
    RngState rng = root.fork(static_cast<std::uint64_t>(k));
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
    const int cells = pick(1, 3);
    const int input = pick(2, 6);
    std::vector<int> hidden(static_cast<std::size_t>(pick(1, 2)));
    for (int& h : hidden) h = pick(2, 8);
    const int output = pick(2, 5);
    const HeadKind head = k % 2 == 0 ? HeadKind::Softmax : HeadKind::Logistic;
    MlpModel model = init_mlp(rng, cells, input, hidden, output, head);
    for (Vector& b : model.biases) b = uniform_matrix(rng, b.size(), 1, -0.5, 0.5);
    // Central differences straddling a rectifier kink measure nothing useful,
    // so the input is redrawn until every hidden pre-activation clears a margin.
    Vector x;
    do {
      x = uniform_matrix(rng, model.input_dim(), 1, -1.0, 1.0);
    } while (min_hidden_preactivation(model, x) < 1e-3);
    const Vector target = uniform_matrix(rng, model.output_dim(), 1, 0.0, 1.0);
    errors.push_back(gradient_check(model, x, target));
  }
  return errors;
}

nlohmann::json to_json(const MlpModel& model) {
  nlohmann::json j;
  j["cells"] = model.cells;
  j["input"] = model.input;
  j["output"] = model.output;
  j["head"] = model.head == HeadKind::Softmax ? "softmax" : "logistic";
  j["layers"] = nlohmann::json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Matrix& w = model.weights[l];
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
    std::vector<double> bias(model.biases[l].data(), model.biases[l].data() + model.biases[l].size());
    j["layers"].push_back({{"rows", w.rows()}, {"cols", w.cols()}, {"w", flat}, {"b", bias}});
  }
  return j;
}

MlpModel mlp_from_json(const nlohmann::json& j) {
  try {
    MlpModel m;
    m.cells = j.at("cells").get<int>();
    m.input = j.at("input").get<int>();
    m.output = j.at("output").get<int>();
    const auto head = j.at("head").get<std::string>();
    if (head == "softmax") m.head = HeadKind::Softmax;
    else if (head == "logistic") m.head = HeadKind::Logistic;
    else throw Error(ErrorKind::CorruptFile, "mlp: unknown head '" + head + "'");
    for (const auto& layer : j.at("layers")) {
      const auto rows = layer.at("rows").get<Eigen::Index>();
      const auto cols = layer.at("cols").get<Eigen::Index>();
      const auto flat = layer.at("w").get<std::vector<double>>();
      const auto bias = layer.at("b").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(flat.size()) != rows * cols || static_cast<Eigen::Index>(bias.size()) != rows)
        throw Error(ErrorKind::CorruptFile, "mlp: layer payload has the wrong length");
      Matrix w(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
      m.weights.push_back(w);
      m.biases.push_back(Eigen::Map<const Vector>(bias.data(), rows));
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptFile, std::string("mlp: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ShapeMismatch) throw Error(ErrorKind::CorruptFile, e.what());
    throw;
  }
}

// IDX files: big-endian 32-bit magic, then one 32-bit count per dimension.
namespace {

std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::TruncatedFile, "idx: cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& bytes, std::size_t at, const std::string& path) {
  if (bytes.size() < at + 4) throw Error(ErrorKind::TruncatedFile, "idx: header truncated in " + path);
  return (std::uint32_t{bytes[at]} << 24) | (std::uint32_t{bytes[at + 1]} << 16) | (std::uint32_t{bytes[at + 2]} << 8) |
         std::uint32_t{bytes[at + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

IdxImages load_idx_images(const std::string& path) {
  const auto bytes = read_all(path);
  const std::uint32_t magic = be32(bytes, 0, path);
  if (magic != kImageMagic) throw Error(ErrorKind::BadMagic, "idx: bad image magic in " + path);
  IdxImages img;
  img.count = static_cast<int>(be32(bytes, 4, path));
  img.rows = static_cast<int>(be32(bytes, 8, path));
  img.cols = static_cast<int>(be32(bytes, 12, path));
  const std::size_t payload = static_cast<std::size_t>(img.count) * img.rows * img.cols;
  if (bytes.size() < 16 + payload) throw Error(ErrorKind::TruncatedFile, "idx: image payload truncated in " + path);
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(payload));
  return img;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  const auto bytes = read_all(path);
  const std::uint32_t magic = be32(bytes, 0, path);
  if (magic != kLabelMagic) throw Error(ErrorKind::BadMagic, "idx: bad label magic in " + path);
  const std::size_t n = be32(bytes, 4, path);
  if (bytes.size() < 8 + n) throw Error(ErrorKind::TruncatedFile, "idx: label payload truncated in " + path);
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(n)};
}

void write_idx_images(const std::string& path, const IdxImages& images) {
  if (images.pixels.size() != static_cast<std::size_t>(images.count) * images.rows * images.cols)
    throw Error(ErrorKind::ShapeMismatch, "idx: pixel count does not match the header");
  std::ofstream out(path, std::ios::binary);
  put_be32(out, kImageMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.write(reinterpret_cast<const char*>(images.pixels.data()), static_cast<std::streamsize>(images.pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

}  // namespace nesy
