#include "add/mkl.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "add/error.hpp"
#include "util.hpp"

namespace add {

int pair_index(int i, int j, int variants) { return i * variants + j; }

Eigen::MatrixXd BaseKernelSet::combined_train(std::span<const double> weights) const {
  require(weights.size() == train.size(), ErrorKind::Parameter,
          "weight count does not match the kernel count");
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(train[0].rows(), train[0].cols());
  for (std::size_t m = 0; m < train.size(); ++m) {
    if (weights[m] != 0.0) k += weights[m] * train[m];
  }
  return k;
}

Eigen::MatrixXd BaseKernelSet::combined_test(std::span<const double> weights) const {
  require(weights.size() == test.size(), ErrorKind::Parameter,
          "weight count does not match the kernel count");
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(test[0].rows(), test[0].cols());
  for (std::size_t m = 0; m < test.size(); ++m) {
    if (weights[m] != 0.0) k += weights[m] * test[m];
  }
  return k;
}

BaseKernelSet BaseKernelSet::select(std::span<const int> kernels) const {
  BaseKernelSet out = *this;
  out.pairs.clear();
  out.train.clear();
  out.test.clear();
  out.scale.clear();
  for (int m : kernels) {
    require(m >= 0 && m < static_cast<int>(pairs.size()), ErrorKind::Parameter,
            "kernel index out of range");
    out.pairs.push_back(pairs[m]);
    out.train.push_back(train[m]);
    out.test.push_back(test[m]);
    out.scale.push_back(scale[m]);
  }
  return out;
}

BaseKernelSet base_grams(const FeatureTable& features, std::span<const int> train_index,
                         std::span<const int> test_index, const GramOptions& options) {
  require(!features.empty(), ErrorKind::Data, "no image features");
  require(!train_index.empty(), ErrorKind::Data, "empty training split");
  // Only the referenced images need features; other rows may stay empty.
  auto checked = [&](int index) -> const std::vector<Eigen::VectorXd>& {
    require(index >= 0 && index < static_cast<int>(features.size()), ErrorKind::Data,
            "image index out of range");
    return features[index];
  };
  const std::size_t variants = checked(train_index[0]).size();
  require(variants >= 1, ErrorKind::Data, "images carry no variant features");
  const Eigen::Index dim = features[train_index[0]][0].size();
  for (auto indices : {train_index, test_index}) {
    for (int index : indices) {
      const auto& image = checked(index);
      require(image.size() == variants, ErrorKind::Data, "missing variant features");
      for (const auto& f : image)
        require(f.size() == dim, ErrorKind::Data, "variant features differ in dimension");
    }
  }

  // Stack features: one matrix per variant, rows are images.
  auto stack = [&](std::span<const int> index, std::size_t v) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(index.size()), dim);
    for (std::size_t r = 0; r < index.size(); ++r)
      m.row(static_cast<Eigen::Index>(r)) = features[index[r]][v].transpose();
    return m;
  };
  std::vector<Eigen::MatrixXd> tr(variants), te(variants);
  for (std::size_t v = 0; v < variants; ++v) {
    tr[v] = stack(train_index, v);
    te[v] = stack(test_index, v);
  }

  BaseKernelSet ks;
  ks.variants = static_cast<int>(variants);
  ks.train_index.assign(train_index.begin(), train_index.end());
  ks.test_index.assign(test_index.begin(), test_index.end());
  ks.variant_trace.resize(variants);
  for (std::size_t v = 0; v < variants; ++v) {
    ks.variant_trace[v] = tr[v].rowwise().squaredNorm().mean();
  }

  for (std::size_t i = 0; i < variants; ++i) {
    for (std::size_t j = 0; j < variants; ++j) {
      Eigen::MatrixXd ktr = tr[i] * tr[j].transpose();
      Eigen::MatrixXd kte = te[i] * tr[j].transpose();
      if (options.symmetrize && i != j) {
        ktr = (0.5 * (ktr + ktr.transpose())).eval();
        kte = 0.5 * (kte + te[j] * tr[i].transpose());
      }
      double s = 1.0;
      if (options.normalize) {
        const double t = std::sqrt(ks.variant_trace[i] * ks.variant_trace[j]);
        if (t > 0.0) s = 1.0 / t;
      }
      ks.pairs.push_back({static_cast<int>(i), static_cast<int>(j)});
      ks.train.push_back(s * ktr);
      ks.test.push_back(s * kte);
      ks.scale.push_back(s);
    }
  }
  return ks;
}

std::string_view to_string(MklStatus s) {
  switch (s) {
    case MklStatus::Converged: return "converged";
    case MklStatus::MaxIterations: return "max_iterations";
    case MklStatus::LineSearchStalled: return "converged_with_warning";
    case MklStatus::Stationary: return "stationary";
    case MklStatus::FixedWeights: return "fixed_weights";
  }
  return "unknown";
}

namespace {

std::vector<int> class_list(std::span<const int> labels) {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

std::vector<int> one_vs_rest(std::span<const int> labels, int cls) {
  std::vector<int> y(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) y[k] = labels[k] == cls ? 1 : -1;
  return y;
}

void check_training_inputs(const BaseKernelSet& ks, std::span<const int> labels) {
  require(ks.size() >= 1, ErrorKind::Parameter, "no base kernels");
  require(static_cast<Eigen::Index>(labels.size()) == ks.train[0].rows(), ErrorKind::Data,
          "label count does not match the training Gram");
  require(class_list(labels).size() >= 2, ErrorKind::Data, "training needs two classes");
}

MklModel make_model(const BaseKernelSet& ks, std::span<const int> labels,
                    const MklOptions& options) {
  MklModel model;
  model.pairs = ks.pairs;
  model.classes = class_list(labels);
  model.C = options.C;
  model.lambda_d = options.lambda_d;
  model.variant_trace = ks.variant_trace;
  model.scale = ks.scale;
  model.train_size = static_cast<int>(labels.size());
  return model;
}

}  // namespace

MklObjective mkl_objective(const BaseKernelSet& ks, std::span<const int> labels,
                           std::span<const double> weights, const MklOptions& options) {
  check_training_inputs(ks, labels);
  SvmOptions svm = options.svm;
  svm.C = options.C;
  const Eigen::MatrixXd k = ks.combined_train(weights);

  MklObjective out;
  out.gradient.assign(ks.size(), 0.0);
  double reg = 0.0;
  for (std::size_t m = 0; m < ks.size(); ++m) {
    reg += weights[m] * weights[m];
    out.gradient[m] = options.lambda_d * weights[m];
  }
  out.value = 0.5 * options.lambda_d * reg;

  for (int cls : class_list(labels)) {
    const auto y = one_vs_rest(labels, cls);
    SvmSolution sol = svm_train(k, y, svm);
    for (auto& w : sol.warnings) out.warnings.push_back(std::move(w));
    out.value += sol.dual_objective;
    Eigen::VectorXd ya(sol.alpha.size());
    for (Eigen::Index t = 0; t < ya.size(); ++t) ya(t) = y[t] * sol.alpha(t);
    for (std::size_t m = 0; m < ks.size(); ++m)
      out.gradient[m] -= 0.5 * ya.dot(ks.train[m] * ya);
    out.classes.push_back({std::move(sol.alpha), y, sol.bias, sol.dual_objective});
  }
  return out;
}

MklModel gmkl_train(const BaseKernelSet& ks, std::span<const int> labels,
                    const MklOptions& options) {
  check_training_inputs(ks, labels);
  require(options.lambda_d >= 0.0, ErrorKind::Parameter, "lambda_d must be non-negative");
  const std::size_t M = ks.size();
  MklModel model = make_model(ks, labels, options);

  std::vector<double> d(M, 1.0 / static_cast<double>(M));
  MklObjective cur = mkl_objective(ks, labels, d, options);
  model.warnings = cur.warnings;
  model.objective_trace.push_back(cur.value);
  model.weight_trace.push_back(d);
  model.status = MklStatus::MaxIterations;

  // Initial step moves the largest weight by at most its own size.
  double gmax = 0.0;
  for (double g : cur.gradient) gmax = std::max(gmax, std::abs(g));
  double step = gmax > 0.0 ? 1.0 / (static_cast<double>(M) * gmax) : 1.0;

  for (int outer = 0; outer < options.max_outer; ++outer) {
    bool accepted = false;
    bool stationary = true;
    std::vector<double> trial(M);
    MklObjective next;
    double s = step;
    for (int h = 0; h <= options.max_halvings; ++h, s *= 0.5) {
      double decrease = 0.0;
      stationary = true;
      for (std::size_t m = 0; m < M; ++m) {
        trial[m] = std::max(0.0, d[m] - s * cur.gradient[m]);
        decrease += cur.gradient[m] * (d[m] - trial[m]);
        stationary &= trial[m] == d[m];
      }
      if (stationary) break;
      next = mkl_objective(ks, labels, trial, options);
      if (next.value <= cur.value - options.armijo * decrease) {
        accepted = true;
        break;
      }
    }
    if (stationary) {
      model.status = MklStatus::Stationary;
      break;
    }
    if (!accepted) {
      model.status = MklStatus::LineSearchStalled;
      model.warnings.push_back("line search made no progress after " +
                               std::to_string(options.max_halvings) + " halvings");
      break;
    }
    const double change = cur.value - next.value;
    d = trial;
    cur = std::move(next);
    for (auto& w : cur.warnings) model.warnings.push_back(w);
    model.objective_trace.push_back(cur.value);
    model.weight_trace.push_back(d);
    step = 2.0 * s;
    if (std::abs(change) < options.relative_tolerance * std::abs(cur.value)) {
      model.status = MklStatus::Converged;
      break;
    }
  }
  model.weights = d;
  model.per_class = std::move(cur.classes);
  return model;
}

MklModel train_fixed(const BaseKernelSet& ks, std::span<const int> labels,
                     std::span<const double> weights, const MklOptions& options) {
  check_training_inputs(ks, labels);
  for (double w : weights)
    require(w >= 0.0, ErrorKind::Parameter, "kernel weights must be non-negative");
  MklModel model = make_model(ks, labels, options);
  model.weights.assign(weights.begin(), weights.end());
  MklObjective obj = mkl_objective(ks, labels, weights, options);
  model.objective_trace.push_back(obj.value);
  model.weight_trace.push_back(model.weights);
  model.per_class = std::move(obj.classes);
  model.warnings = std::move(obj.warnings);
  model.status = MklStatus::FixedWeights;
  return model;
}

Prediction predict(const MklModel& model, const BaseKernelSet& ks) {
  require(ks.pairs == model.pairs, ErrorKind::Stale,
          "kernel set pairs differ from the trained model");
  require(ks.variant_trace == model.variant_trace && ks.scale == model.scale,
          ErrorKind::Stale, "kernel normalization differs from the trained model");
  require(!ks.test.empty() && ks.test[0].cols() == model.train_size, ErrorKind::Stale,
          "test blocks were built against a different training set");
  const Eigen::MatrixXd k = ks.combined_test(model.weights);

  Prediction out;
  const auto n = k.rows();
  const auto classes = static_cast<Eigen::Index>(model.classes.size());
  out.scores.resize(n, classes);
  for (Eigen::Index c = 0; c < classes; ++c) {
    const auto& cm = model.per_class[c];
    Eigen::VectorXd ya(cm.alpha.size());
    for (Eigen::Index t = 0; t < ya.size(); ++t) ya(t) = cm.signed_labels[t] * cm.alpha(t);
    out.scores.col(c) = (k * ya).array() + cm.bias;
  }
  out.labels.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    Eigen::Index best = 0;
    out.scores.row(r).maxCoeff(&best);  // first maximum on ties
    out.labels[r] = model.classes[best];
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  require(predicted.size() == truth.size() && !truth.empty(), ErrorKind::Parameter,
          "prediction and truth sizes differ");
  std::size_t hit = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) hit += predicted[k] == truth[k];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------

namespace {

namespace fs = std::filesystem;

std::string join_pairs(const std::vector<KernelPair>& pairs) {
  std::string s;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    if (k) s += ',';
    s += std::to_string(pairs[k].i) + ":" + std::to_string(pairs[k].j);
  }
  return s;
}

std::vector<KernelPair> split_pairs(const std::string& text) {
  std::vector<KernelPair> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    const auto item = text.substr(pos, comma - pos);
    const auto colon = item.find(':');
    if (colon == std::string::npos) fail(ErrorKind::Format, "bad kernel pair list");
    out.push_back({std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
    pos = comma + 1;
  }
  return out;
}

std::vector<double> to_doubles(const std::vector<int>& v) { return {v.begin(), v.end()}; }

std::vector<int> to_ints(const std::vector<double>& v) {
  std::vector<int> out;
  for (double x : v) out.push_back(static_cast<int>(std::lround(x)));
  return out;
}

TensorBlob stack_matrices(const std::vector<Eigen::MatrixXd>& ms) {
  TensorBlob b;
  const auto rows = ms.empty() ? 0 : ms[0].rows();
  const auto cols = ms.empty() ? 0 : ms[0].cols();
  b.shape = {ms.size(), static_cast<std::uint64_t>(rows), static_cast<std::uint64_t>(cols)};
  for (const auto& m : ms)
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) b.values.push_back(static_cast<float>(m(r, c)));
  return b;
}

std::vector<Eigen::MatrixXd> unstack_matrices(const TensorBlob& b) {
  require(b.shape.size() == 3, ErrorKind::Format, "expected a rank-3 blob");
  std::vector<Eigen::MatrixXd> out;
  std::size_t k = 0;
  for (std::uint64_t m = 0; m < b.shape[0]; ++m) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(b.shape[1]), static_cast<Eigen::Index>(b.shape[2]));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = b.values[k++];
    out.push_back(std::move(x));
  }
  return out;
}

const std::string& meta(const TensorBlob& b, const std::string& key) {
  auto it = b.metadata.find(key);
  if (it == b.metadata.end()) fail(ErrorKind::Format, "missing metadata key '" + key + "'");
  return it->second;
}

}  // namespace

void save_kernels(const BaseKernelSet& ks, const std::string& directory) {
  fs::create_directories(directory);
  TensorBlob tr = stack_matrices(ks.train);
  tr.metadata = {{"kind", "base_grams"},
                 {"variants", std::to_string(ks.variants)},
                 {"pairs", join_pairs(ks.pairs)},
                 {"variant_trace", detail::join_doubles(ks.variant_trace)},
                 {"scale", detail::join_doubles(ks.scale)},
                 {"train_index", detail::join_doubles(to_doubles(ks.train_index))},
                 {"test_index", detail::join_doubles(to_doubles(ks.test_index))},
                 {"train_labels", detail::join_doubles(to_doubles(ks.train_labels))},
                 {"test_labels", detail::join_doubles(to_doubles(ks.test_labels))}};
  write_blob(tr, fs::path(directory) / "train.addf");
  TensorBlob te = stack_matrices(ks.test);
  te.metadata = {{"kind", "base_grams_test"}};
  write_blob(te, fs::path(directory) / "test.addf");
}

BaseKernelSet load_kernels(const std::string& directory) {
  const TensorBlob tr = read_blob(fs::path(directory) / "train.addf");
  const TensorBlob te = read_blob(fs::path(directory) / "test.addf");
  require(meta(tr, "kind") == "base_grams", ErrorKind::Format, "not a base gram bundle");
  BaseKernelSet ks;
  ks.variants = std::stoi(meta(tr, "variants"));
  ks.pairs = split_pairs(meta(tr, "pairs"));
  ks.variant_trace = detail::split_doubles(meta(tr, "variant_trace"));
  ks.scale = detail::split_doubles(meta(tr, "scale"));
  ks.train_index = to_ints(detail::split_doubles(meta(tr, "train_index")));
  ks.test_index = to_ints(detail::split_doubles(meta(tr, "test_index")));
  ks.train_labels = to_ints(detail::split_doubles(meta(tr, "train_labels")));
  ks.test_labels = to_ints(detail::split_doubles(meta(tr, "test_labels")));
  ks.train = unstack_matrices(tr);
  ks.test = unstack_matrices(te);
  require(ks.train.size() == ks.pairs.size() && ks.test.size() == ks.pairs.size(),
          ErrorKind::Format, "gram bundle is inconsistent");
  return ks;
}

void save_model(const MklModel& model, const std::string& directory) {
  fs::create_directories(directory);
  TensorBlob alpha;
  const auto n = static_cast<std::uint64_t>(model.train_size);
  alpha.shape = {model.per_class.size(), n};
  for (const auto& c : model.per_class)
    for (Eigen::Index t = 0; t < c.alpha.size(); ++t)
      alpha.values.push_back(static_cast<float>(c.alpha(t)));
  std::vector<double> biases;
  for (const auto& c : model.per_class) biases.push_back(c.bias);
  std::vector<double> signs;
  for (const auto& c : model.per_class)
    for (int s : c.signed_labels) signs.push_back(s);

  alpha.metadata = {{"kind", "mkl_model"},
                    {"weights", detail::join_doubles(model.weights)},
                    {"pairs", join_pairs(model.pairs)},
                    {"classes", detail::join_doubles(to_doubles(model.classes))},
                    {"bias", detail::join_doubles(biases)},
                    {"signed_labels", detail::join_doubles(signs)},
                    {"C", detail::format_double(model.C)},
                    {"lambda_d", detail::format_double(model.lambda_d)},
                    {"variant_trace", detail::join_doubles(model.variant_trace)},
                    {"scale", detail::join_doubles(model.scale)},
                    {"objective_trace", detail::join_doubles(model.objective_trace)},
                    {"status", std::string(to_string(model.status))}};
  write_blob(alpha, fs::path(directory) / "model.addf");
}

MklModel load_model(const std::string& directory) {
  const TensorBlob b = read_blob(fs::path(directory) / "model.addf");
  require(meta(b, "kind") == "mkl_model" && b.shape.size() == 2, ErrorKind::Format,
          "not a model bundle");
  MklModel model;
  model.weights = detail::split_doubles(meta(b, "weights"));
  model.pairs = split_pairs(meta(b, "pairs"));
  model.classes = to_ints(detail::split_doubles(meta(b, "classes")));
  model.C = detail::parse_double(meta(b, "C"));
  model.lambda_d = detail::parse_double(meta(b, "lambda_d"));
  model.variant_trace = detail::split_doubles(meta(b, "variant_trace"));
  model.scale = detail::split_doubles(meta(b, "scale"));
  model.objective_trace = detail::split_doubles(meta(b, "objective_trace"));
  model.train_size = static_cast<int>(b.shape[1]);
  const auto biases = detail::split_doubles(meta(b, "bias"));
  const auto signs = to_ints(detail::split_doubles(meta(b, "signed_labels")));
  require(biases.size() == b.shape[0] && signs.size() == b.shape[0] * b.shape[1],
          ErrorKind::Format, "model bundle is inconsistent");
  for (std::uint64_t c = 0; c < b.shape[0]; ++c) {
    ClassModel cm;
    cm.alpha.resize(model.train_size);
    for (int t = 0; t < model.train_size; ++t) cm.alpha(t) = b.values[c * b.shape[1] + t];
    cm.signed_labels.assign(signs.begin() + static_cast<long>(c * b.shape[1]),
                            signs.begin() + static_cast<long>((c + 1) * b.shape[1]));
    cm.bias = biases[c];
    model.per_class.push_back(std::move(cm));
  }
  return model;
}

}  // namespace add
