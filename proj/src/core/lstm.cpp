#include "core/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace qgrom {

LstmHyper LstmHyper::preset_q() {
  LstmHyper h;
  h.layers = 1;
  h.cells = 100;
  h.batch_size = 8;
  h.dropout = 0.0;
  return h;
}

LstmHyper LstmHyper::preset_psi() {
  LstmHyper h;
  h.layers = 3;
  h.cells = 50;
  h.batch_size = 16;
  h.dropout = 0.1;
  return h;
}

void LstmHyper::validate() const {
  if (layers < 1 || cells < 1 || batch_size < 1 || epochs < 1)
    throw InvalidArgument("lstm: layers, cells, batch size and epochs must be positive");
  if (lookback < 1) throw InvalidArgument("lstm: lookback must be >= 1");
  if (!(dropout >= 0.0) || dropout >= 1.0)
    throw InvalidArgument("lstm: dropout must lie in [0,1)");
  if (weight_decay < 0.0) throw InvalidArgument("lstm: weight decay must be >= 0");
  if (!(learning_rate > 0.0)) throw InvalidArgument("lstm: learning rate must be positive");
  if (!(validation_fraction >= 0.0) || validation_fraction >= 1.0)
    throw InvalidArgument("lstm: validation fraction must lie in [0,1)");
}

Eigen::VectorXd AffineNorm::normalize(const Eigen::VectorXd& x) const {
  if (x.size() != center.size())
    throw InvalidArgument("normalize: component count mismatch");
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out[i] = scale[i] > 0.0 ? (x[i] - center[i]) / scale[i] : 0.0;
  return out;
}

Eigen::VectorXd AffineNorm::denormalize(const Eigen::VectorXd& x) const {
  if (x.size() != center.size())
    throw InvalidArgument("denormalize: component count mismatch");
  return center + scale.cwiseProduct(x);
}

AffineNorm AffineNorm::fit(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw InvalidArgument("AffineNorm::fit: no rows");
  AffineNorm n;
  const Eigen::VectorXd mn = rows.colwise().minCoeff();
  const Eigen::VectorXd mx = rows.colwise().maxCoeff();
  n.center = 0.5 * (mn + mx);
  n.scale = 0.5 * (mx - mn);
  return n;
}

SequenceDataset build_dataset(const CoefficientTable& coeffs,
                              const Eigen::MatrixXd& samples,
                              const std::vector<double>& times, int sigma_L) {
  const int nt = coeffs.n_times;
  const int n_modes = static_cast<int>(coeffs.coeffs.rows());
  const int m = static_cast<int>(samples.rows());
  const int d = static_cast<int>(samples.cols());
  if (sigma_L < 1) throw InvalidArgument("build_dataset: lookback must be >= 1");
  if (sigma_L >= nt)
    throw InvalidArgument("build_dataset: lookback " + std::to_string(sigma_L) +
                          " must be smaller than snapshot count " +
                          std::to_string(nt));
  if (static_cast<int>(times.size()) != nt)
    throw InvalidArgument("build_dataset: time count does not match table");
  if (coeffs.coeffs.cols() != static_cast<Eigen::Index>(m) * nt)
    throw InvalidArgument("build_dataset: table columns != M * N^t");

  SequenceDataset ds;
  ds.lookback = sigma_L;
  ds.param_dim = d;
  ds.output_width = n_modes;
  ds.input_width = n_modes + d + 1;

  // raw windows first; normalization statistics are fitted over everything
  // this dataset emits, then frozen
  for (int k = 0; k < m; ++k) {
    for (int p = sigma_L - 1; p <= nt - 2; ++p) {
      Eigen::MatrixXd w(sigma_L, ds.input_width);
      for (int row = 0; row < sigma_L; ++row) {
        const int pp = p - row;  // newest first
        w.block(row, 0, 1, d) = samples.row(k);
        w(row, d) = times[pp];
        w.block(row, d + 1, 1, n_modes) =
            coeffs.coeffs.col(coeffs.column_index(k, pp)).transpose();
      }
      ds.inputs.push_back(std::move(w));
      ds.targets.push_back(coeffs.coeffs.col(coeffs.column_index(k, p + 1)));
      ds.sample_of.push_back(k);
    }
  }

  const int n_windows = ds.size();
  Eigen::MatrixXd all_rows(static_cast<Eigen::Index>(n_windows) * sigma_L,
                           ds.input_width);
  Eigen::MatrixXd all_targets(n_windows, n_modes);
  for (int w = 0; w < n_windows; ++w) {
    all_rows.middleRows(static_cast<Eigen::Index>(w) * sigma_L, sigma_L) =
        ds.inputs[w];
    all_targets.row(w) = ds.targets[w].transpose();
  }
  ds.input_norm = AffineNorm::fit(all_rows);
  ds.target_norm = AffineNorm::fit(all_targets);

  for (int w = 0; w < n_windows; ++w) {
    for (int row = 0; row < sigma_L; ++row)
      ds.inputs[w].row(row) =
          ds.input_norm.normalize(ds.inputs[w].row(row).transpose()).transpose();
    ds.targets[w] = ds.target_norm.normalize(ds.targets[w]);
  }
  return ds;
}

void LstmLayerParams::set_zero(int cells, int in_width) {
  Wi = Wf = Wg = Wo = Eigen::MatrixXd::Zero(cells, in_width);
  Ui = Uf = Ug = Uo = Eigen::MatrixXd::Zero(cells, cells);
  bi = bf = bg = bo = Eigen::VectorXd::Zero(cells);
}

bool LstmModel::all_finite() const {
  for (const auto& l : layers) {
    if (!l.Wi.allFinite() || !l.Wf.allFinite() || !l.Wg.allFinite() ||
        !l.Wo.allFinite() || !l.Ui.allFinite() || !l.Uf.allFinite() ||
        !l.Ug.allFinite() || !l.Uo.allFinite() || !l.bi.allFinite() ||
        !l.bf.allFinite() || !l.bg.allFinite() || !l.bo.allFinite())
      return false;
  }
  return W_out.allFinite() && b_out.allFinite();
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LayerCache {
  // indexed by time step, oldest first
  std::vector<Eigen::VectorXd> x, gi, gf, gg, go, c, tanhc, h;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
};

// drop_mul: per layer 0..L-2, elementwise multiplier applied to that layer's
// hidden output before it feeds the next layer (empty = no dropout).
Eigen::VectorXd run_forward(const LstmModel& model,
                            const Eigen::MatrixXd& window,
                            const std::vector<Eigen::VectorXd>& drop_mul,
                            ForwardCache* cache) {
  const int T = static_cast<int>(window.rows());
  const int L = static_cast<int>(model.layers.size());
  const int H = model.hyper.cells;
  if (window.cols() != model.input_width)
    throw InvalidArgument("lstm forward: window width " +
                          std::to_string(window.cols()) + " != model input width " +
                          std::to_string(model.input_width));
  if (cache) cache->layers.assign(L, {});

  std::vector<Eigen::VectorXd> inputs(T);
  // rows are stored newest first; the recurrence consumes oldest first
  for (int s = 0; s < T; ++s) inputs[s] = window.row(T - 1 - s).transpose();

  Eigen::VectorXd h, c, pre_i, pre_f, pre_g, pre_o;
  for (int l = 0; l < L; ++l) {
    const auto& p = model.layers[l];
    h = Eigen::VectorXd::Zero(H);
    c = Eigen::VectorXd::Zero(H);
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    for (int s = 0; s < T; ++s) {
      const Eigen::VectorXd& x = inputs[s];
      pre_i = p.Wi * x + p.Ui * h + p.bi;
      pre_f = p.Wf * x + p.Uf * h + p.bf;
      pre_g = p.Wg * x + p.Ug * h + p.bg;
      pre_o = p.Wo * x + p.Uo * h + p.bo;
      Eigen::VectorXd gi = pre_i.unaryExpr([](double v) { return sigmoid(v); });
      Eigen::VectorXd gf = pre_f.unaryExpr([](double v) { return sigmoid(v); });
      Eigen::VectorXd gg = pre_g.array().tanh();
      Eigen::VectorXd go = pre_o.unaryExpr([](double v) { return sigmoid(v); });
      c = gf.cwiseProduct(c) + gi.cwiseProduct(gg);
      Eigen::VectorXd tanhc = c.array().tanh();
      h = go.cwiseProduct(tanhc);
      if (lc) {
        lc->x.push_back(x);
        lc->gi.push_back(gi);
        lc->gf.push_back(gf);
        lc->gg.push_back(gg);
        lc->go.push_back(go);
        lc->c.push_back(c);
        lc->tanhc.push_back(tanhc);
        lc->h.push_back(h);
      }
      inputs[s] = h;  // feeds the next layer
      if (l + 1 < L && static_cast<int>(drop_mul.size()) > l &&
          drop_mul[l].size() > 0)
        inputs[s] = inputs[s].cwiseProduct(drop_mul[l]);
    }
  }
  return model.W_out * inputs[T - 1] + model.b_out;
}

// Accumulates parameter gradients for dLoss/dy_hat = dy into grads.
void run_backward(const LstmModel& model, const ForwardCache& cache,
                  const std::vector<Eigen::VectorXd>& drop_mul,
                  const Eigen::VectorXd& dy, LstmModel& grads) {
  const int L = static_cast<int>(model.layers.size());
  const int T = static_cast<int>(cache.layers[0].x.size());
  const int H = model.hyper.cells;

  // dropped hidden state of the top layer at the last step is what W_out saw
  const Eigen::VectorXd& h_last = cache.layers[L - 1].h[T - 1];
  grads.W_out += dy * h_last.transpose();
  grads.b_out += dy;

  // dh arriving at each (layer, step) from the layer above / output head
  std::vector<Eigen::VectorXd> dh_from_above(T, Eigen::VectorXd::Zero(H));
  dh_from_above[T - 1] = model.W_out.transpose() * dy;

  for (int l = L - 1; l >= 0; --l) {
    const auto& p = model.layers[l];
    const auto& lc = cache.layers[l];
    auto& gp = grads.layers[l];
    const int in_width = static_cast<int>(p.Wi.cols());
    std::vector<Eigen::VectorXd> dx(T, Eigen::VectorXd::Zero(in_width));

    Eigen::VectorXd dh_rec = Eigen::VectorXd::Zero(H);
    Eigen::VectorXd dc_rec = Eigen::VectorXd::Zero(H);
    for (int s = T - 1; s >= 0; --s) {
      Eigen::VectorXd dh = dh_from_above[s] + dh_rec;
      const Eigen::VectorXd& gi = lc.gi[s];
      const Eigen::VectorXd& gf = lc.gf[s];
      const Eigen::VectorXd& gg = lc.gg[s];
      const Eigen::VectorXd& go = lc.go[s];
      const Eigen::VectorXd& tanhc = lc.tanhc[s];
      const Eigen::VectorXd c_prev =
          s > 0 ? lc.c[s - 1] : Eigen::VectorXd::Zero(H);
      const Eigen::VectorXd h_prev =
          s > 0 ? lc.h[s - 1] : Eigen::VectorXd::Zero(H);

      Eigen::VectorXd dc =
          dc_rec + dh.cwiseProduct(go).cwiseProduct(
                       (1.0 - tanhc.array().square()).matrix());
      Eigen::VectorXd dpre_o =
          dh.cwiseProduct(tanhc).cwiseProduct(go).cwiseProduct(
              (1.0 - go.array()).matrix());
      Eigen::VectorXd dpre_i = dc.cwiseProduct(gg).cwiseProduct(gi).cwiseProduct(
          (1.0 - gi.array()).matrix());
      Eigen::VectorXd dpre_f =
          dc.cwiseProduct(c_prev).cwiseProduct(gf).cwiseProduct(
              (1.0 - gf.array()).matrix());
      Eigen::VectorXd dpre_g = dc.cwiseProduct(gi).cwiseProduct(
          (1.0 - gg.array().square()).matrix());

      dc_rec = dc.cwiseProduct(gf);
      dh_rec = p.Ui.transpose() * dpre_i + p.Uf.transpose() * dpre_f +
               p.Ug.transpose() * dpre_g + p.Uo.transpose() * dpre_o;
      dx[s] = p.Wi.transpose() * dpre_i + p.Wf.transpose() * dpre_f +
              p.Wg.transpose() * dpre_g + p.Wo.transpose() * dpre_o;

      const Eigen::VectorXd& x = lc.x[s];
      gp.Wi += dpre_i * x.transpose();
      gp.Wf += dpre_f * x.transpose();
      gp.Wg += dpre_g * x.transpose();
      gp.Wo += dpre_o * x.transpose();
      gp.Ui += dpre_i * h_prev.transpose();
      gp.Uf += dpre_f * h_prev.transpose();
      gp.Ug += dpre_g * h_prev.transpose();
      gp.Uo += dpre_o * h_prev.transpose();
      gp.bi += dpre_i;
      gp.bf += dpre_f;
      gp.bg += dpre_g;
      gp.bo += dpre_o;
    }

    if (l > 0) {
      // what layer l consumed was the (possibly dropped) hidden of layer l-1
      const bool dropped =
          static_cast<int>(drop_mul.size()) > l - 1 && drop_mul[l - 1].size() > 0;
      for (int s = 0; s < T; ++s)
        dh_from_above[s] =
            dropped ? dx[s].cwiseProduct(drop_mul[l - 1]) : dx[s];
    }
  }
}

std::vector<Eigen::VectorXd*> param_blocks_vec(LstmModel& m) {
  std::vector<Eigen::VectorXd*> out;
  for (auto& l : m.layers) {
    out.push_back(&l.bi);
    out.push_back(&l.bf);
    out.push_back(&l.bg);
    out.push_back(&l.bo);
  }
  out.push_back(&m.b_out);
  return out;
}

std::vector<Eigen::MatrixXd*> param_blocks_mat(LstmModel& m) {
  std::vector<Eigen::MatrixXd*> out;
  for (auto& l : m.layers) {
    out.push_back(&l.Wi);
    out.push_back(&l.Wf);
    out.push_back(&l.Wg);
    out.push_back(&l.Wo);
    out.push_back(&l.Ui);
    out.push_back(&l.Uf);
    out.push_back(&l.Ug);
    out.push_back(&l.Uo);
  }
  out.push_back(&m.W_out);
  return out;
}

// flat view over every parameter, matrices first then biases
std::vector<double*> flatten(LstmModel& m, std::vector<Eigen::Index>* sizes) {
  std::vector<double*> ptrs;
  for (auto* b : param_blocks_mat(m)) {
    ptrs.push_back(b->data());
    if (sizes) sizes->push_back(b->size());
  }
  for (auto* b : param_blocks_vec(m)) {
    ptrs.push_back(b->data());
    if (sizes) sizes->push_back(b->size());
  }
  return ptrs;
}

LstmModel zero_like(const LstmModel& m) {
  LstmModel z = m;
  for (auto* b : param_blocks_mat(z)) b->setZero();
  for (auto* b : param_blocks_vec(z)) b->setZero();
  return z;
}

LstmModel init_model(const SequenceDataset& ds, const LstmHyper& hyper,
                     std::uint64_t seed, Rng& rng) {
  LstmModel m;
  m.hyper = hyper;
  m.input_width = ds.input_width;
  m.output_width = ds.output_width;
  m.input_norm = ds.input_norm;
  m.target_norm = ds.target_norm;
  m.seed = seed;
  m.layers.resize(hyper.layers);
  for (int l = 0; l < hyper.layers; ++l) {
    const int in_w = l == 0 ? ds.input_width : hyper.cells;
    m.layers[l].set_zero(hyper.cells, in_w);
  }
  m.W_out = Eigen::MatrixXd::Zero(ds.output_width, hyper.cells);
  m.b_out = Eigen::VectorXd::Zero(ds.output_width);

  // weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; biases zero
  for (auto* b : param_blocks_mat(m)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(b->cols()));
    for (Eigen::Index i = 0; i < b->size(); ++i)
      b->data()[i] = bound * (2.0 * rng.next_double() - 1.0);
  }
  return m;
}

std::vector<Eigen::VectorXd> draw_drop_masks(const LstmModel& m, Rng& rng) {
  std::vector<Eigen::VectorXd> masks;
  const double rate = m.hyper.dropout;
  if (rate <= 0.0 || m.hyper.layers < 2) return masks;
  masks.resize(m.hyper.layers - 1);
  const double keep = 1.0 - rate;
  for (auto& mask : masks) {
    mask.resize(m.hyper.cells);
    for (Eigen::Index i = 0; i < mask.size(); ++i)
      mask[i] = rng.next_double() < rate ? 0.0 : 1.0 / keep;
  }
  return masks;
}

}  // namespace

Eigen::VectorXd forward(const LstmModel& model, const Eigen::MatrixXd& window) {
  return run_forward(model, window, {}, nullptr);
}

TrainResult train(const SequenceDataset& dataset, const LstmHyper& hyper,
                  std::uint64_t seed) {
  hyper.validate();
  if (dataset.size() == 0) throw InvalidArgument("train: empty dataset");
  if (dataset.lookback < 1) throw InvalidArgument("train: dataset has no windows");

  Rng rng(seed);
  TrainResult result;
  result.model = init_model(dataset, hyper, seed, rng);
  LstmModel& model = result.model;

  // chronologically last fraction of each parameter's windows -> validation
  std::vector<int> train_idx, val_idx;
  {
    std::vector<std::vector<int>> per_sample;
    for (int w = 0; w < dataset.size(); ++w) {
      const int k = dataset.sample_of[w];
      if (k >= static_cast<int>(per_sample.size())) per_sample.resize(k + 1);
      per_sample[k].push_back(w);
    }
    for (auto& ws : per_sample) {
      int n_val = static_cast<int>(hyper.validation_fraction * ws.size());
      n_val = std::min(n_val, static_cast<int>(ws.size()) - 1);
      if (n_val < 0) n_val = 0;
      for (std::size_t i = 0; i < ws.size(); ++i)
        (i + n_val < ws.size() ? train_idx : val_idx).push_back(ws[i]);
    }
  }
  if (train_idx.empty()) throw InvalidArgument("train: no training windows");

  LstmModel grads = zero_like(model);
  LstmModel m1 = zero_like(model);
  LstmModel m2 = zero_like(model);
  std::vector<Eigen::Index> sizes;
  const auto w_ptr = flatten(model, &sizes);
  const auto g_ptr = flatten(grads, nullptr);
  const auto m1_ptr = flatten(m1, nullptr);
  const auto m2_ptr = flatten(m2, nullptr);

  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const double lr = hyper.learning_rate, wd = hyper.weight_decay;
  long adam_t = 0;

  const double inv_n = 1.0 / model.output_width;
  ForwardCache cache;
  auto window_loss = [&](int idx) {
    const Eigen::VectorXd yhat = forward(model, dataset.inputs[idx]);
    return (yhat - dataset.targets[idx]).squaredNorm() * inv_n;
  };

  std::vector<int> order = train_idx;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    // Fisher-Yates with the run generator
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = rng.next_below(i);
      std::swap(order[i - 1], order[j]);
    }
    const int n_train = static_cast<int>(order.size());
    const int bs = std::min(hyper.batch_size, n_train);
    const int n_batches = n_train / bs;  // final partial batch dropped

    double epoch_loss = 0.0;
    for (int b = 0; b < n_batches; ++b) {
      for (auto* blk : param_blocks_mat(grads)) blk->setZero();
      for (auto* blk : param_blocks_vec(grads)) blk->setZero();

      double batch_loss = 0.0;
      for (int s = 0; s < bs; ++s) {
        const int idx = order[b * bs + s];
        const auto masks = draw_drop_masks(model, rng);
        const Eigen::VectorXd yhat =
            run_forward(model, dataset.inputs[idx], masks, &cache);
        const Eigen::VectorXd diff = yhat - dataset.targets[idx];
        batch_loss += diff.squaredNorm() * inv_n;
        const Eigen::VectorXd dy = 2.0 * inv_n * diff / bs;
        run_backward(model, cache, masks, dy, grads);
      }
      batch_loss /= bs;
      if (!std::isfinite(batch_loss))
        throw NumericError("train: non-finite loss at epoch " +
                           std::to_string(epoch));
      epoch_loss += batch_loss;

      ++adam_t;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_t));
      for (std::size_t blk = 0; blk < w_ptr.size(); ++blk) {
        double* w = w_ptr[blk];
        double* g = g_ptr[blk];
        double* ma = m1_ptr[blk];
        double* va = m2_ptr[blk];
        for (Eigen::Index i = 0; i < sizes[blk]; ++i) {
          ma[i] = beta1 * ma[i] + (1.0 - beta1) * g[i];
          va[i] = beta2 * va[i] + (1.0 - beta2) * g[i] * g[i];
          const double mhat = ma[i] / bc1;
          const double vhat = va[i] / bc2;
          w[i] -= lr * mhat / (std::sqrt(vhat) + eps) + lr * wd * w[i];
        }
      }
    }
    result.train_loss.push_back(epoch_loss / std::max(1, n_batches));

    if (!val_idx.empty()) {
      double v = 0.0;
      for (int idx : val_idx) v += window_loss(idx);
      result.val_loss.push_back(v / val_idx.size());
    } else {
      result.val_loss.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return result;
}

GradientCheckResult gradient_check(const LstmModel& model,
                                   const Eigen::MatrixXd& window,
                                   const Eigen::VectorXd& target,
                                   double epsilon, std::uint64_t seed,
                                   int n_params, bool with_dropout_mask) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-4))
    throw InvalidArgument("gradient_check: epsilon must lie in [1e-7, 1e-4]");
  if (target.size() != model.output_width)
    throw InvalidArgument("gradient_check: target width mismatch");

  Rng rng(seed);
  LstmModel work = model;
  std::vector<Eigen::VectorXd> masks;
  if (with_dropout_mask) masks = draw_drop_masks(work, rng);

  const double inv_n = 1.0 / model.output_width;
  auto loss = [&](LstmModel& m) {
    const Eigen::VectorXd yhat = run_forward(m, window, masks, nullptr);
    return (yhat - target).squaredNorm() * inv_n;
  };

  LstmModel grads = zero_like(work);
  {
    ForwardCache cache;
    const Eigen::VectorXd yhat = run_forward(work, window, masks, &cache);
    const Eigen::VectorXd dy = 2.0 * inv_n * (yhat - target);
    run_backward(work, cache, masks, dy, grads);
  }

  std::vector<Eigen::Index> sizes;
  const auto w_ptr = flatten(work, &sizes);
  const auto g_ptr = flatten(grads, nullptr);
  Eigen::Index total = 0;
  for (auto s : sizes) total += s;

  // Discrepancies are measured against the overall gradient magnitude;
  // per-coordinate ratios on near-zero entries would only amplify the
  // finite-difference roundoff floor.
  double grad_scale = 1e-8;
  for (std::size_t blk = 0; blk < sizes.size(); ++blk)
    for (Eigen::Index i = 0; i < sizes[blk]; ++i)
      grad_scale = std::max(grad_scale, std::abs(g_ptr[blk][i]));

  GradientCheckResult res;
  const Eigen::Index n_checks = std::min<Eigen::Index>(n_params, total);
  for (Eigen::Index t = 0; t < n_checks; ++t) {
    Eigen::Index flat = n_checks == total
                            ? t
                            : static_cast<Eigen::Index>(rng.next_below(total));
    std::size_t blk = 0;
    while (flat >= sizes[blk]) {
      flat -= sizes[blk];
      ++blk;
    }
    double* w = &w_ptr[blk][flat];
    const double orig = *w;
    *w = orig + epsilon;
    const double lp = loss(work);
    *w = orig - epsilon;
    const double lm = loss(work);
    *w = orig;
    const double fd = (lp - lm) / (2.0 * epsilon);
    const double an = g_ptr[blk][flat];
    const double diff = std::abs(fd - an);
    res.max_absolute = std::max(res.max_absolute, diff);
    res.max_relative = std::max(
        res.max_relative, diff / std::max({std::abs(fd), std::abs(an), grad_scale}));
    ++res.checked;
  }
  return res;
}

RolloutResult predict_autoregressive(const LstmModel& model,
                                     const Eigen::MatrixXd& seed_window,
                                     const Eigen::VectorXd& mu,
                                     const std::vector<double>& horizon_times) {
  const int d = model.input_width - model.output_width - 1;
  if (static_cast<int>(mu.size()) != d)
    throw InvalidArgument("predict: mu dimension " + std::to_string(mu.size()) +
                          " != model parameter dimension " + std::to_string(d));
  if (seed_window.rows() != model.hyper.lookback ||
      seed_window.cols() != model.input_width)
    throw InvalidArgument("predict: seed window shape mismatch");

  RolloutResult out;
  for (int c = 0; c < d; ++c) {
    const double lo = model.input_norm.center[c] - model.input_norm.scale[c];
    const double hi = model.input_norm.center[c] + model.input_norm.scale[c];
    const double pad = 1e-12 * std::max(1.0, std::abs(hi));
    if (mu[c] < lo - pad || mu[c] > hi + pad) out.mu_outside_training_box = true;
  }

  const int T = model.hyper.lookback;
  Eigen::MatrixXd window = seed_window;
  out.coeffs.resize(static_cast<Eigen::Index>(horizon_times.size()),
                    model.output_width);
  Eigen::MatrixXd normalized(T, model.input_width);
  for (std::size_t stepi = 0; stepi < horizon_times.size(); ++stepi) {
    for (int r = 0; r < T; ++r)
      normalized.row(r) =
          model.input_norm.normalize(window.row(r).transpose()).transpose();
    const Eigen::VectorXd yhat = forward(model, normalized);
    const Eigen::VectorXd alpha = model.target_norm.denormalize(yhat);
    if (!alpha.allFinite())
      throw NumericError("predict: non-finite rollout at step " +
                         std::to_string(stepi));
    for (int r = T - 1; r > 0; --r) window.row(r) = window.row(r - 1);
    window.block(0, 0, 1, d) = mu.transpose();
    window(0, d) = horizon_times[stepi];
    window.block(0, d + 1, 1, model.output_width) = alpha.transpose();
    out.coeffs.row(static_cast<Eigen::Index>(stepi)) = alpha.transpose();
  }
  return out;
}

namespace {
constexpr char kModelMagic[8] = {'Q', 'G', 'L', 'S', 'T', 'M', '0', '1'};

void put_vec(std::ofstream& os, Fnv1a& hash, const Eigen::VectorXd& v) {
  const std::uint64_t n = static_cast<std::uint64_t>(v.size());
  os.write(reinterpret_cast<const char*>(&n), 8);
  hash.update(&n, 8);
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
  hash.update(v.data(), n * sizeof(double));
}

void put_mat(std::ofstream& os, Fnv1a& hash, const Eigen::MatrixXd& m) {
  const std::uint64_t r = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t c = static_cast<std::uint64_t>(m.cols());
  os.write(reinterpret_cast<const char*>(&r), 8);
  os.write(reinterpret_cast<const char*>(&c), 8);
  hash.update(&r, 8);
  hash.update(&c, 8);
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(m.size() * sizeof(double)));
  hash.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
}

Eigen::VectorXd get_vec(std::ifstream& is, Fnv1a& hash, const std::string& path) {
  std::uint64_t n = 0;
  is.read(reinterpret_cast<char*>(&n), 8);
  if (is.gcount() != 8) throw FormatError(path + ": truncated model archive");
  hash.update(&n, 8);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(n * sizeof(double)))
    throw FormatError(path + ": truncated model archive");
  hash.update(v.data(), n * sizeof(double));
  return v;
}

Eigen::MatrixXd get_mat(std::ifstream& is, Fnv1a& hash, const std::string& path) {
  std::uint64_t r = 0, c = 0;
  is.read(reinterpret_cast<char*>(&r), 8);
  is.read(reinterpret_cast<char*>(&c), 8);
  if (!is) throw FormatError(path + ": truncated model archive");
  hash.update(&r, 8);
  hash.update(&c, 8);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(m.size() * sizeof(double)))
    throw FormatError(path + ": truncated model archive");
  hash.update(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  return m;
}

}  // namespace

void write_model(const LstmModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  Fnv1a hash;
  auto put = [&](const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    hash.update(p, n);
  };
  put(kModelMagic, 8);
  const std::int32_t ints[6] = {model.hyper.layers,     model.hyper.cells,
                                model.hyper.batch_size, model.hyper.epochs,
                                model.hyper.lookback,   0};
  put(ints, sizeof(ints));
  const double doubles[5] = {model.hyper.validation_fraction,
                             model.hyper.learning_rate, model.hyper.dropout,
                             model.hyper.weight_decay, 0.0};
  put(doubles, sizeof(doubles));
  const std::int32_t widths[2] = {model.input_width, model.output_width};
  put(widths, sizeof(widths));
  put(&model.seed, 8);
  put_vec(os, hash, model.input_norm.center);
  put_vec(os, hash, model.input_norm.scale);
  put_vec(os, hash, model.target_norm.center);
  put_vec(os, hash, model.target_norm.scale);
  for (const auto& l : model.layers) {
    put_mat(os, hash, l.Wi);
    put_mat(os, hash, l.Wf);
    put_mat(os, hash, l.Wg);
    put_mat(os, hash, l.Wo);
    put_mat(os, hash, l.Ui);
    put_mat(os, hash, l.Uf);
    put_mat(os, hash, l.Ug);
    put_mat(os, hash, l.Uo);
    put_vec(os, hash, l.bi);
    put_vec(os, hash, l.bf);
    put_vec(os, hash, l.bg);
    put_vec(os, hash, l.bo);
  }
  put_mat(os, hash, model.W_out);
  put_vec(os, hash, model.b_out);
  const std::uint64_t digest = hash.digest();
  os.write(reinterpret_cast<const char*>(&digest), 8);
  os.flush();
  if (!os) throw IoError("failed writing " + path);
}

LstmModel read_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  Fnv1a hash;
  auto get = [&](void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (is.gcount() != static_cast<std::streamsize>(n))
      throw FormatError(path + ": truncated model archive");
    hash.update(p, n);
  };
  char magic[8];
  get(magic, 8);
  if (std::memcmp(magic, kModelMagic, 8) != 0)
    throw FormatError(path + ": bad magic (not a QGLSTM01 file)");
  LstmModel m;
  std::int32_t ints[6];
  get(ints, sizeof(ints));
  m.hyper.layers = ints[0];
  m.hyper.cells = ints[1];
  m.hyper.batch_size = ints[2];
  m.hyper.epochs = ints[3];
  m.hyper.lookback = ints[4];
  double doubles[5];
  get(doubles, sizeof(doubles));
  m.hyper.validation_fraction = doubles[0];
  m.hyper.learning_rate = doubles[1];
  m.hyper.dropout = doubles[2];
  m.hyper.weight_decay = doubles[3];
  std::int32_t widths[2];
  get(widths, sizeof(widths));
  m.input_width = widths[0];
  m.output_width = widths[1];
  get(&m.seed, 8);
  m.input_norm.center = get_vec(is, hash, path);
  m.input_norm.scale = get_vec(is, hash, path);
  m.target_norm.center = get_vec(is, hash, path);
  m.target_norm.scale = get_vec(is, hash, path);
  m.layers.resize(m.hyper.layers);
  for (auto& l : m.layers) {
    l.Wi = get_mat(is, hash, path);
    l.Wf = get_mat(is, hash, path);
    l.Wg = get_mat(is, hash, path);
    l.Wo = get_mat(is, hash, path);
    l.Ui = get_mat(is, hash, path);
    l.Uf = get_mat(is, hash, path);
    l.Ug = get_mat(is, hash, path);
    l.Uo = get_mat(is, hash, path);
    l.bi = get_vec(is, hash, path);
    l.bf = get_vec(is, hash, path);
    l.bg = get_vec(is, hash, path);
    l.bo = get_vec(is, hash, path);
  }
  m.W_out = get_mat(is, hash, path);
  m.b_out = get_vec(is, hash, path);
  const std::uint64_t expected = hash.digest();
  std::uint64_t stored = 0;
  is.read(reinterpret_cast<char*>(&stored), 8);
  if (is.gcount() != 8) throw FormatError(path + ": missing checksum");
  if (stored != expected) throw FormatError(path + ": checksum mismatch");
  return m;
}

void write_loss_history_csv(const TrainResult& result, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "epoch,train_mse,val_mse\n";
  for (std::size_t e = 0; e < result.train_loss.size(); ++e)
    os << (e + 1) << ',' << format_full(result.train_loss[e]) << ','
       << format_full(result.val_loss[e]) << '\n';
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace qgrom
