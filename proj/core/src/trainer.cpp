#include "svr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "svr/dims.hpp"
#include "svr/error.hpp"
#include "svr/flow.hpp"
#include "svr/parallel.hpp"
#include "svr/spectra.hpp"

namespace svr {

void TrainConfig::validate() const {
  if (widths.size() < 2) throw InputError("train: need at least an input and an output width");
  for (std::size_t w : widths)
    if (w < 1) throw InputError("train: widths must be >= 1");
  if (epochs < 1) throw InputError("train: epochs must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InputError("train: learning rate must be finite and >= 0");
  if (batch_size < 1) throw InputError("train: batch size must be >= 1");
}

std::string TrainResult::log_csv(const TrainConfig& config) const {
  std::ostringstream out;
  out.precision(10);
  out << "# widths=";
  for (std::size_t i = 0; i < config.widths.size(); ++i) out << (i ? "-" : "") << config.widths[i];
  out << " epochs=" << config.epochs << " lr=" << config.learning_rate << " batch=" << config.batch_size
      << " seed=" << config.seed << " optimizer=sgd init=he loss=softmax_xent";
  if (config.train_subset) out << " train_subset=" << *config.train_subset;
  out << '\n' << "epoch,loss,test_acc\n";
  for (const EpochLog& e : log) out << e.epoch << ',' << e.loss << ',' << e.test_accuracy << '\n';
  return out.str();
}

Model mlp_model(const std::vector<std::size_t>& widths) {
  Model m;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    LayerSpec l;
    l.name = "fc" + std::to_string(i);
    l.kind = LayerKind::fc;
    l.in_dim = widths[i];
    l.out_dim = widths[i + 1];
    m.spec.layers.push_back(l);
    m.weights[l.name] = Tensor(l.weight_shape());
  }
  m.spec.activation = Activation::relu;
  m.spec.head = Head::argmax;
  return m;
}

Model he_init(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  Model m = mlp_model(widths);
  Rng rng(seed);
  for (std::size_t i = 0; i < m.spec.layers.size(); ++i) {
    std::normal_distribution<double> d(0.0, std::sqrt(2.0 / static_cast<double>(widths[i])));
    for (double& v : m.weight(i).values()) v = d(rng);
  }
  return m;
}

double loss_and_gradients(const std::vector<Matrix>& weights, const Matrix& inputs, std::span<const int> labels,
                          std::vector<Matrix>* gradients) {
  const std::size_t layers = weights.size();
  const Eigen::Index batch = inputs.cols();
  if (static_cast<std::size_t>(batch) != labels.size()) throw InputError("loss: label count does not match inputs");

  // acts[l] is the input of layer l; pre[l] its linear output.
  std::vector<Matrix> acts(layers), pre(layers);
  acts[0] = inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = weights[l] * acts[l];
    if (l + 1 < layers) acts[l + 1] = pre[l].cwiseMax(0.0);
  }

  Matrix& logits = pre.back();
  double loss = 0.0;
  Matrix delta(logits.rows(), batch);
  for (Eigen::Index c = 0; c < batch; ++c) {
    const double top = logits.col(c).maxCoeff();
    const Vector e = (logits.col(c).array() - top).exp().matrix();
    const double z = e.sum();
    const int y = labels[static_cast<std::size_t>(c)];
    if (y < 0 || y >= logits.rows()) throw InputError("loss: label outside the output range");
    loss += std::log(z) - (logits(y, c) - top);
    delta.col(c) = e / z;
    delta(y, c) -= 1.0;
  }
  const double scale = 1.0 / static_cast<double>(batch);
  loss *= scale;
  if (!gradients) return loss;

  delta *= scale;
  gradients->resize(layers);
  for (std::size_t l = layers; l-- > 0;) {
    (*gradients)[l] = delta * acts[l].transpose();
    if (l > 0) delta = (weights[l].transpose() * delta).cwiseProduct((pre[l - 1].array() > 0.0).cast<double>().matrix());
  }
  return loss;
}

TrainResult train_mlp(const TrainConfig& config, const Dataset& train_full, const Dataset& test,
                      const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  const Dataset train = config.train_subset ? train_full.head(*config.train_subset) : train_full;
  if (train.size() == 0) throw InputError("train: empty training set");
  if (static_cast<std::size_t>(train.images.rows()) != config.widths.front())
    throw InputError("train: first width must equal the input size " + std::to_string(train.images.rows()));

  TrainResult result;
  result.model = he_init(config.widths, config.seed);
  std::vector<Matrix> w;
  for (std::size_t i = 0; i < result.model.spec.layers.size(); ++i) w.push_back(result.model.weight(i).as_matrix());

  Rng rng = Rng::stream(config.seed, 1);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> grads;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      Matrix x(train.images.rows(), static_cast<Eigen::Index>(len));
      std::vector<int> y(len);
      for (std::size_t k = 0; k < len; ++k) {
        x.col(static_cast<Eigen::Index>(k)) = train.images.col(static_cast<Eigen::Index>(order[start + k])).cast<double>();
        y[k] = train.labels[order[start + k]];
      }
      const double loss = loss_and_gradients(w, x, y, &grads);
      if (!std::isfinite(loss))
        throw NumericalError("train: loss diverged at epoch " + std::to_string(epoch) + ", sample " +
                             std::to_string(start));
      loss_sum += loss * static_cast<double>(len);
      seen += len;
      for (std::size_t l = 0; l < w.size(); ++l) w[l] -= config.learning_rate * grads[l];
    }
    for (std::size_t l = 0; l < w.size(); ++l) result.model.weight(l) = Tensor::from_matrix(w[l]);
    EpochLog entry{epoch, loss_sum / static_cast<double>(seen), test.size() ? accuracy(result.model, test) : 0.0};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.test_accuracy = result.log.back().test_accuracy;
  return result;
}

std::string WidthReport::runs_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "# epochs=" << base.epochs << " lr=" << base.learning_rate << " batch=" << base.batch_size
      << " seed=" << base.seed << " index_base=1";
  if (base.train_subset) out << " train_subset=" << *base.train_subset;
  out << "\nn,run,d_out_1,d_in_1,d_out_2,d_in_2,accuracy\n";
  for (const WidthRun& r : runs)
    out << r.n << ',' << r.run << ',' << r.d_out[0] << ',' << r.d_in[0] << ',' << r.d_out[1] << ',' << r.d_in[1]
        << ',' << r.accuracy << '\n';
  return out.str();
}

std::string WidthReport::summary_csv() const {
  std::ostringstream out;
  out.precision(10);
  out << "n,mean_d_out_1,mean_d_in_1,mean_d_out_2,mean_d_in_2,mean_accuracy,share_d_out_le_d_in_1,"
         "share_d_out_le_d_in_2\n";
  for (const WidthSummary& s : summary)
    out << s.n << ',' << s.mean_d_out[0] << ',' << s.mean_d_in[0] << ',' << s.mean_d_out[1] << ',' << s.mean_d_in[1]
        << ',' << s.mean_accuracy << ',' << s.d_out_le_d_in[0] << ',' << s.d_out_le_d_in[1] << '\n';
  return out.str();
}

WidthReport width_experiment(std::span<const std::size_t> n_values, std::size_t runs, const Dataset& train,
                             const Dataset& test, const TrainConfig& base, unsigned threads) {
  if (runs == 0) throw InputError("width_experiment: runs must be >= 1");
  const std::size_t inputs = static_cast<std::size_t>(train.images.rows());
  std::size_t classes = 0;
  for (std::uint8_t label : train.labels) classes = std::max<std::size_t>(classes, label + 1u);

  WidthReport report{base, std::vector<WidthRun>(n_values.size() * runs), {}};
  parallel_for(report.runs.size(), threads, [&](std::size_t job) {
    const std::size_t n = n_values[job / runs];
    const std::size_t run = job % runs;
    TrainConfig cfg = base;
    cfg.widths = {inputs, n, n, classes};
    cfg.seed = Rng::stream(Rng::stream(base.seed, n)(), run)();
    const TrainResult trained = train_mlp(cfg, train, test);
    const SvrGraph graph = build_svr(trained.model);
    WidthRun& r = report.runs[job];
    r.n = n;
    r.run = run;
    r.accuracy = trained.test_accuracy;
    for (std::size_t a = 0; a < 2; ++a) {
      const InternalDims d = internal_dims(graph.adjacencies[a].values, graph.adjacencies[a].n_null);
      r.d_out[a] = d.d_out;
      r.d_in[a] = d.d_in;
    }
  });

  for (std::size_t i = 0; i < n_values.size(); ++i) {
    WidthSummary s;
    s.n = n_values[i];
    const double count = static_cast<double>(runs);
    for (std::size_t run = 0; run < runs; ++run) {
      const WidthRun& r = report.runs[i * runs + run];
      s.mean_accuracy += r.accuracy / count;
      for (std::size_t a = 0; a < 2; ++a) {
        s.mean_d_out[a] += static_cast<double>(r.d_out[a]) / count;
        s.mean_d_in[a] += static_cast<double>(r.d_in[a]) / count;
        s.d_out_le_d_in[a] += (r.d_out[a] <= r.d_in[a] ? 1.0 : 0.0) / count;
      }
    }
    report.summary.push_back(s);
  }
  return report;
}

}  // namespace svr
