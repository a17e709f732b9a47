#include "flowsynth/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowsynth/rng.hpp"

namespace flowsynth::train {

namespace {

// Independent random streams, one per purpose.
enum Stream : std::uint64_t {
  kInit = 1,
  kBatches = 2,
  kLatent = 3,
  kDropout = 4,
  kProbes = 5,
  kValidationSample = 6,
  kEvalModels = 7,
  kSample = 8,
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, "invalid config: " + what);
}

}  // namespace

const char* to_string(ValidationMetric m) {
  switch (m) {
    case ValidationMetric::F1: return "f1";
    case ValidationMetric::MacroF1: return "macro_f1";
    case ValidationMetric::Mse: return "mse";
  }
  return "?";
}

ValidationMetric validation_metric_from_string(const std::string& s) {
  if (s == "f1") return ValidationMetric::F1;
  if (s == "macro_f1") return ValidationMetric::MacroF1;
  if (s == "mse") return ValidationMetric::Mse;
  throw Error(ErrorKind::InvalidArgument, "unknown validation metric '" + s + "' (expected f1, macro_f1 or mse)");
}

const char* to_string(StepKind k) {
  switch (k) {
    case StepKind::Autoencoder: return "autoencoder";
    case StepKind::Discriminator: return "discriminator";
    case StepKind::Generator: return "generator";
    case StepKind::Density: return "density";
    case StepKind::Validation: return "validation";
  }
  return "?";
}

void TrainConfig::validate() const {
  require(max_iter >= 0, "max_iter must be >= 0");
  require(period_d >= 1 && period_g >= 1 && period_l >= 1, "periods must be >= 1");
  require(std::isfinite(gamma), "gamma must be finite");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(latent_dim >= 1, "latent_dim must be >= 1");
  require(enc_layers >= 1 && dec_layers >= 1 && disc_layers >= 1, "layer counts must be >= 1");
  require(ae_hidden >= 1 && disc_hidden >= 1, "hidden widths must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(leaky_slope >= 0.0 && leaky_slope < 1.0, "leaky_slope must be in [0, 1)");
  require(flow_layers >= 1, "flow_layers must be >= 1");
  require(flow_width_mult > 0.0, "flow_width_mult must be > 0");
  solver.validate();
  require(probe_samples >= 1, "probe_samples must be >= 1");
  require(lr > 0.0, "lr must be > 0");
  require(gen_lr >= 0.0 && disc_lr >= 0.0, "gen_lr and disc_lr must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam betas must be in [0, 1)");
  require(gp_lambda >= 0.0, "gp_lambda must be >= 0");
  require(std::isfinite(adv_weight), "adv_weight must be finite");
  require(adv_sign == 1.0 || adv_sign == -1.0, "adv_sign must be +1 or -1");
  require(validation_interval >= 1, "validation_interval must be >= 1");
}

nets::NetArch TrainConfig::net_arch(int data_dim) const {
  nets::NetArch a;
  a.data_dim = data_dim;
  a.latent_dim = latent_dim;
  a.enc_layers = enc_layers;
  a.dec_layers = dec_layers;
  a.disc_layers = disc_layers;
  a.ae_hidden = ae_hidden;
  a.disc_hidden = disc_hidden;
  a.dropout = dropout;
  a.leaky_slope = leaky_slope;
  return a;
}

flow::FlowArch TrainConfig::flow_arch() const {
  flow::FlowArch a;
  a.dim = latent_dim;
  a.layers = flow_layers;
  a.width_mult = flow_width_mult;
  a.gate = gate;
  return a;
}

ad::AdamConfig TrainConfig::adam(Net which) const {
  ad::AdamConfig c;
  c.lr = lr;
  if (which == Net::Generator && gen_lr > 0.0) c.lr = gen_lr;
  if (which == Net::Critic && disc_lr > 0.0) c.lr = disc_lr;
  c.beta1 = beta1;
  c.beta2 = beta2;
  return c;
}

namespace {

bool same_params(const ad::ParamSet& a, const ad::ParamSet& b) {
  if (a.size() != b.size() || a.adam_steps() != b.adam_steps()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.entry(i);
    const auto& y = b.entry(i);
    if (x.name != y.name || x.value != y.value || x.m != y.m || x.v != y.v) return false;
  }
  return true;
}

Tensor standard_normal(Eigen::Index rows, int cols, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor z(rows, cols);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = nd(rng);
  return z;
}

void check_finite(double v, const char* loss, std::int64_t k) {
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::NonFinite, std::string("non-finite ") + loss + " at iteration " + std::to_string(k));
  }
}

void check_grads_finite(const std::vector<Tensor>& grads, const char* loss, std::int64_t k) {
  for (const auto& t : grads) {
    if (!ad::all_finite(t)) throw Error(ErrorKind::NonFinite, std::string("non-finite gradient of ") + loss + " at iteration " + std::to_string(k));
  }
}

// Shuffled-epoch batches without replacement; reshuffled every epoch.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::size_t batch, Rng rng) : order_(n), batch_(batch), rng_(std::move(rng)) {
    std::iota(order_.begin(), order_.end(), 0);
    pos_ = n;
  }

  std::vector<std::size_t> next() {
    if (pos_ >= order_.size()) {
      for (std::size_t i = order_.size() - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(order_[i], order_[pick(rng_)]);
      }
      pos_ = 0;
    }
    const std::size_t end = std::min(order_.size(), pos_ + batch_);
    std::vector<std::size_t> idx(order_.begin() + static_cast<std::ptrdiff_t>(pos_), order_.begin() + static_cast<std::ptrdiff_t>(end));
    pos_ = end;
    return idx;
  }

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_;
  Rng rng_;
  std::size_t pos_;
};

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& idx) {
  Tensor out(static_cast<Eigen::Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

bool better(double a, double b, ValidationMetric m) {
  if (std::isnan(a)) return false;
  if (std::isnan(b)) return true;
  return higher_is_better(m) ? a > b : a < b;
}

}  // namespace

bool same_parameters(const Checkpoint& a, const Checkpoint& b) {
  return same_params(a.encoder.params(), b.encoder.params()) && same_params(a.decoder.params(), b.decoder.params()) &&
         same_params(a.discriminator.params(), b.discriminator.params()) && same_params(a.generator.params(), b.generator.params());
}

double score_fake(const Table& fake, const Table& val, ValidationMetric metric, std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  const auto report = eval::task_eval(fake, val, task_of(metric), seeds);
  return report.value(to_string(metric));
}

Tensor sample_encoded(const Checkpoint& ckpt, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "sample size must be >= 1");
  Rng rng = make_rng(seed, kSample);
  const int dim = ckpt.generator.arch().dim;
  const std::size_t chunk = 1024;
  Tensor out(static_cast<Eigen::Index>(n), ckpt.decoder.out_width());
  for (std::size_t start = 0; start < n; start += chunk) {
    const auto rows = static_cast<Eigen::Index>(std::min(chunk, n - start));
    const Tensor z = standard_normal(rows, dim, rng);
    const Tensor h = flow::generate(ckpt.generator, z, ckpt.config.solver);
    out.middleRows(static_cast<Eigen::Index>(start), rows) = ckpt.decoder.forward(h);
  }
  return out;
}

Table sample(const Checkpoint& ckpt, std::size_t n, std::uint64_t seed) {
  return ckpt.transform.decode_table(sample_encoded(ckpt, n, seed));
}

double validate(const Checkpoint& ckpt, const Table& val_table, std::uint64_t seed) {
  if (val_table.rows() == 0) throw Error(ErrorKind::InvalidArgument, "validation table is empty");
  const Table fake = sample(ckpt, val_table.rows(), derive_seed(seed, kValidationSample));
  return score_fake(fake, val_table, ckpt.config.metric, derive_seed(seed, kEvalModels));
}

Checkpoint train(const Table& train_table, const Table& val_table, const TrainConfig& cfg, const StepRecorder& recorder) {
  cfg.validate();
  if (train_table.rows() == 0) throw Error(ErrorKind::InvalidArgument, "training table is empty");
  if (val_table.rows() == 0) throw Error(ErrorKind::InvalidArgument, "validation table is empty");
  if (!(train_table.schema() == val_table.schema())) throw Error(ErrorKind::InvalidArgument, "training and validation schemas differ");
  train_table.schema().require_label();

  Checkpoint cur;
  cur.config = cfg;
  cur.transform = prep::TransformSpec::fit(train_table);
  const Tensor data = cur.transform.encode_table(train_table);
  const auto slots = cur.transform.slots();
  const nets::NetArch arch = cfg.net_arch(cur.transform.width());
  {
    Rng init = make_rng(cfg.seed, kInit);
    cur.encoder = nets::make_encoder(arch, init);
    cur.decoder = nets::make_decoder(arch, init);
    cur.discriminator = nets::make_discriminator(arch, init);
    cur.generator = flow::OdeFunc(cfg.flow_arch(), init);
  }

  const std::size_t n = train_table.rows();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  const std::int64_t epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
  const std::int64_t val_every = epoch * cfg.validation_interval;
  BatchSampler batches(n, batch, make_rng(cfg.seed, kBatches));
  Rng latent = make_rng(cfg.seed, kLatent);
  Rng drop = make_rng(cfg.seed, kDropout);
  const ad::AdamConfig adam = cfg.adam(TrainConfig::Net::Autoencoder);
  const ad::AdamConfig adam_d = cfg.adam(TrainConfig::Net::Critic);
  const ad::AdamConfig adam_g = cfg.adam(TrainConfig::Net::Generator);
  auto emit = [&](StepKind kind, std::int64_t k, const nets::LossReport& r, double score = 0.0) {
    if (recorder) recorder(StepEvent{kind, k, r, score});
  };

  std::vector<ValidationRecord> history;
  Checkpoint best;
  auto run_validation = [&](std::int64_t k) {
    const double s = validate(cur, val_table, derive_seed(cfg.seed, kValidationSample, static_cast<std::uint64_t>(k)));
    history.push_back({k, s});
    nets::LossReport none;
    emit(StepKind::Validation, k, none, s);
    if (history.size() == 1 || better(s, best.best_score, cfg.metric)) {
      best = cur;
      best.iteration = k;
      best.best_score = s;
    }
  };
  run_validation(0);

  for (std::int64_t k = 1; k <= cfg.max_iter; ++k) {
    const Tensor xb = gather_rows(data, batches.next());
    const auto rows = xb.rows();

    {  // Autoencoder step: L_AE plus the critic term on the real-side codes.
      const Tensor h_fake = flow::generate(cur.generator, standard_normal(rows, cfg.latent_dim, latent), cfg.solver);
      ad::Graph g;
      auto ep = cur.encoder.params().bind(g, true);
      auto rp = cur.decoder.params().bind(g, true);
      auto dp = cur.discriminator.params().bind(g, false);
      Var x = g.constant(xb);
      nets::AeLoss ae = nets::loss_ae(g, cur.encoder, ep, cur.decoder, rp, x, g.constant(h_fake), slots);
      Var total = ae.total;
      if (cfg.adv_weight != 0.0) {
        Var h = cur.encoder.forward(g, ep, x);
        if (cfg.adv_decoder) h = cur.encoder.forward(g, ep, cur.decoder.forward(g, rp, h));
        Var critic = ad::mean(cur.discriminator.forward(g, dp, h, &drop));
        total = total + ad::scale(critic, -cfg.adv_weight * cfg.adv_sign);
      }
      nets::LossReport r;
      r.l_reconstruct = ae.reconstruct.value()(0, 0);
      r.l_ae_total = total.value()(0, 0);
      check_finite(r.l_ae_total, "autoencoder loss", k);
      std::vector<Var> wrt(ep.begin(), ep.end());
      wrt.insert(wrt.end(), rp.begin(), rp.end());
      auto grads = g.grad(total, wrt);
      check_grads_finite(grads, "autoencoder loss", k);
      std::vector<Tensor> ge(grads.begin(), grads.begin() + static_cast<std::ptrdiff_t>(ep.size()));
      std::vector<Tensor> gr(grads.begin() + static_cast<std::ptrdiff_t>(ep.size()), grads.end());
      ad::adam_step(cur.encoder.params(), ge, adam);
      ad::adam_step(cur.decoder.params(), gr, adam);
      emit(StepKind::Autoencoder, k, r);
    }

    if (k % cfg.period_d == 0) {
      const Tensor h_real = cur.encoder.forward(xb);
      const Tensor h_fake = flow::generate(cur.generator, standard_normal(rows, cfg.latent_dim, latent), cfg.solver);
      ad::Graph g;
      auto dp = cur.discriminator.params().bind(g, true);
      nets::WganLoss w = nets::loss_wgan_gp(g, cur.discriminator, dp, g.constant(h_real), g.constant(h_fake), cfg.gp_lambda, drop);
      nets::LossReport r;
      r.d_loss = w.d_loss.value()(0, 0);
      r.g_loss = w.g_loss.value()(0, 0);
      r.gp_term = w.gp_term.value()(0, 0);
      check_finite(r.d_loss, "discriminator loss", k);
      auto grads = g.grad(w.d_loss, dp);
      check_grads_finite(grads, "discriminator loss", k);
      ad::adam_step(cur.discriminator.params(), grads, adam_d);
      emit(StepKind::Discriminator, k, r);
    }

    if (k % cfg.period_g == 0) {
      const Tensor z = standard_normal(rows, cfg.latent_dim, latent);
      ad::Graph g;
      auto gp = cur.generator.params().bind(g, true);
      auto dp = cur.discriminator.params().bind(g, false);
      Var h_fake = flow::generate(g, gp, cur.generator, g.constant(z), cfg.solver);
      Var g_loss = ad::scale(ad::mean(cur.discriminator.forward(g, dp, h_fake, &drop)), -1.0);
      nets::LossReport r;
      r.g_loss = g_loss.value()(0, 0);
      check_finite(r.g_loss, "generator loss", k);
      auto grads = g.grad(g_loss, gp);
      check_grads_finite(grads, "generator loss", k);
      ad::adam_step(cur.generator.params(), grads, adam_g);
      emit(StepKind::Generator, k, r);
    }

    if (k % cfg.period_l == 0) {
      nets::LossReport r;
      r.gamma = cfg.gamma;
      if (cfg.gamma != 0.0) {
        const Tensor h = cur.encoder.forward(xb);
        const flow::DensityOptions probes{cfg.probe, cfg.probe_samples, derive_seed(cfg.seed, kProbes, static_cast<std::uint64_t>(k))};
        ad::Graph g;
        auto gp = cur.generator.params().bind(g, true);
        Var reg = nets::reg_density(g, gp, cur.generator, g.constant(h), cfg.gamma, cfg.solver, probes);
        r.r_density = reg.value()(0, 0);
        check_finite(r.r_density, "density regularizer", k);
        auto grads = g.grad(reg, gp);
        check_grads_finite(grads, "density regularizer", k);
        ad::adam_step(cur.generator.params(), grads, adam_g);
      }
      emit(StepKind::Density, k, r);
    }

    if (k % val_every == 0 || k == cfg.max_iter) run_validation(k);
  }

  best.history = std::move(history);
  return best;
}

}  // namespace flowsynth::train
