#include "capeval/adapter.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "capeval/csv.hpp"
#include "capeval/random.hpp"

namespace capeval {

AdapterState AdapterState::identity(std::size_t dim, double tau) {
  if (dim == 0) throw UsageError("adapter dimension must be positive");
  if (!(tau > 0.0)) throw UsageError("temperature must be positive");
  const auto d = static_cast<Eigen::Index>(dim);
  return AdapterState{Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Identity(d, d),
                      std::log(tau), 0};
}

AdapterGradient AdapterGradient::zero(std::size_t dim) {
  const auto d = static_cast<Eigen::Index>(dim);
  return AdapterGradient{Eigen::MatrixXd::Zero(d, d), Eigen::MatrixXd::Zero(d, d), 0.0};
}

AdapterGradient& AdapterGradient::operator+=(const AdapterGradient& other) {
  w_text += other.w_text;
  w_image += other.w_image;
  log_tau += other.log_tau;
  return *this;
}

AdapterGradient& AdapterGradient::operator*=(double factor) {
  w_text *= factor;
  w_image *= factor;
  log_tau *= factor;
  return *this;
}

namespace {

// Row-normalized projection of a batch through one adapter matrix.
struct Projection {
  Eigen::MatrixXd unit;   // rows: normalize(W x_i)
  Eigen::VectorXd norms;  // ||W x_i||
};

Projection project(const Eigen::MatrixXd& rows, const Eigen::MatrixXd& w) {
  Projection p;
  p.unit = rows * w.transpose();
  p.norms = p.unit.rowwise().norm();
  if ((p.norms.array() <= 0.0).any() || !p.norms.allFinite()) {
    throw NumericError("adapter maps an embedding to zero or non-finite length");
  }
  p.unit.array().colwise() /= p.norms.array();
  return p;
}

// Backprop through row normalization and the linear map: given dL/d(unit
// rows), returns dL/dW for unit_i = W x_i / ||W x_i||.
Eigen::MatrixXd backprop(const Projection& p, const Eigen::MatrixXd& rows,
                         const Eigen::MatrixXd& d_unit) {
  const Eigen::VectorXd radial = (p.unit.array() * d_unit.array()).rowwise().sum();
  Eigen::MatrixXd d_proj = d_unit - (p.unit.array().colwise() * radial.array()).matrix();
  d_proj.array().colwise() /= p.norms.array();
  return d_proj.transpose() * rows;
}

void check_pairs(const Eigen::MatrixXd& images, const Eigen::MatrixXd& texts,
                 const AdapterState& state) {
  if (images.rows() != texts.rows()) throw UsageError("batch images and texts are not aligned");
  const auto d = static_cast<Eigen::Index>(state.dimension());
  if (images.cols() != d || texts.cols() != d) {
    throw UsageError("batch dimension does not match the adapter dimension " +
                     std::to_string(d));
  }
}

// log-sum-exp of each row.
Eigen::VectorXd row_lse(const Eigen::MatrixXd& z) {
  const Eigen::VectorXd peak = z.rowwise().maxCoeff();
  const Eigen::VectorXd sums = (z.colwise() - peak).array().exp().rowwise().sum();
  return peak.array() + sums.array().log();
}

}  // namespace

SimilarityLoss symmetric_infonce(const Eigen::MatrixXd& s, double tau) {
  const Eigen::Index n = s.rows();
  if (n < 2 || s.cols() != n) throw UsageError("contrastive loss needs a square batch of N >= 2");
  if (!(tau > 0.0)) throw NumericError("temperature must be positive");

  const Eigen::MatrixXd z = s / tau;
  const Eigen::VectorXd lse_rows = row_lse(z);              // image -> texts
  const Eigen::VectorXd lse_cols = row_lse(z.transpose());  // text -> images
  const double nd = static_cast<double>(n);

  SimilarityLoss out;
  out.loss = -(2.0 * z.diagonal().sum() - lse_rows.sum() - lse_cols.sum()) / (2.0 * nd);
  if (!std::isfinite(out.loss)) throw NumericError("contrastive loss is not finite");

  // dL/dz = (softmax over rows + softmax over columns - 2I) / 2N
  Eigen::MatrixXd dz = (z.colwise() - lse_rows).array().exp().matrix();
  dz += (z.rowwise() - lse_cols.transpose()).array().exp().matrix();
  dz.diagonal().array() -= 2.0;
  dz /= 2.0 * nd;

  out.d_similarity = dz / tau;
  out.d_log_tau = -(dz.array() * z.array()).sum();
  return out;
}

LossResult contrastive_loss(const AdapterState& state, const ContrastiveBatch& batch) {
  check_pairs(batch.images, batch.texts, state);
  if (batch.size() < 2) throw UsageError("contrastive batch needs N >= 2");
  const Projection img = project(batch.images, state.w_image);
  const Projection txt = project(batch.texts, state.w_text);
  const Eigen::MatrixXd s = img.unit * txt.unit.transpose();

  const SimilarityLoss sl = symmetric_infonce(s, state.tau());
  LossResult out;
  out.loss = sl.loss;
  out.grad.w_image = backprop(img, batch.images, sl.d_similarity * txt.unit);
  out.grad.w_text = backprop(txt, batch.texts, sl.d_similarity.transpose() * img.unit);
  out.grad.log_tau = sl.d_log_tau;
  return out;
}

LossResult pearson_loss(const AdapterState& state, const PearsonBatch& batch,
                        const ClipScoreConfig& cfg, bool raw_cos) {
  check_pairs(batch.images, batch.texts, state);
  if (batch.ratings.size() != batch.size()) throw UsageError("ratings not aligned with batch");
  if (batch.size() < 3) throw UsageError("pearson batch needs at least 3 pairs");

  const Projection img = project(batch.images, state.w_image);
  const Projection txt = project(batch.texts, state.w_text);
  const Eigen::VectorXd cos = (img.unit.array() * txt.unit.array()).rowwise().sum();

  Eigen::VectorXd slope(cos.size());
  for (Eigen::Index k = 0; k < cos.size(); ++k) slope[k] = (raw_cos || cos[k] > 0.0) ? cfg.w : 0.0;
  const Eigen::VectorXd x = raw_cos ? Eigen::VectorXd(cfg.w * cos)
                                    : Eigen::VectorXd(cfg.w * cos.cwiseMax(0.0));

  const Eigen::VectorXd xc = x.array() - x.mean();
  const Eigen::VectorXd yc = batch.ratings.array() - batch.ratings.mean();
  const double sx = xc.norm();
  const double sy = yc.norm();
  if (sx < 1e-12) throw DegenerateBatch("pearson batch has constant scores");
  if (sy < 1e-12) throw DegenerateBatch("pearson batch has constant ratings");
  const double r = xc.dot(yc) / (sx * sy);

  LossResult out;
  out.loss = 1.0 - r;
  const Eigen::VectorXd dx = -(yc / (sx * sy) - r * xc / (sx * sx));
  const Eigen::VectorXd dcos = dx.cwiseProduct(slope);
  const Eigen::MatrixXd d_img_unit = txt.unit.array().colwise() * dcos.array();
  const Eigen::MatrixXd d_txt_unit = img.unit.array().colwise() * dcos.array();
  out.grad.w_image = backprop(img, batch.images, d_img_unit);
  out.grad.w_text = backprop(txt, batch.texts, d_txt_unit);
  out.grad.log_tau = 0.0;
  return out;
}

LossMode parse_loss_mode(std::string_view name) {
  if (name == "contrastive" || name == "contrastive_only") return LossMode::contrastive_only;
  if (name == "pearson" || name == "pearson_only") return LossMode::pearson_only;
  if (name == "combined") return LossMode::combined;
  throw UsageError("unknown loss mode '" + std::string(name) +
                   "' (expected contrastive, pearson or combined)");
}

namespace {

// Lexicographic order over row contents, so training does not depend on the
// order in which instances were supplied.
std::vector<Eigen::Index> canonical_order(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                          const Eigen::VectorXd* extra) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(a.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (a(i, c) != a(j, c)) return a(i, c) < a(j, c);
    }
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
      if (b(i, c) != b(j, c)) return b(i, c) < b(j, c);
    }
    if (extra != nullptr && (*extra)[i] != (*extra)[j]) return (*extra)[i] < (*extra)[j];
    return false;
  });
  return order;
}

void shuffle(std::vector<Eigen::Index>& v, std::uint64_t key) {
  CounterRng rng(key);
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

// Chunks of `size`; a short tail is kept only if it meets `min_size`.
std::vector<std::vector<Eigen::Index>> make_batches(const std::vector<Eigen::Index>& order,
                                                    std::size_t size, std::size_t min_size) {
  std::vector<std::vector<Eigen::Index>> batches;
  for (std::size_t start = 0; start < order.size(); start += size) {
    const std::size_t end = std::min(order.size(), start + size);
    if (end - start < min_size) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
  return out;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (cfg.epochs < 1) throw UsageError("epochs must be positive");
  if (cfg.batch_size < 1) throw UsageError("batch size must be positive");
  if (!(cfg.contrastive_weight > 0.0) || !(cfg.pearson_weight > 0.0)) {
    throw UsageError("loss weights must be positive");
  }
  if (!(cfg.tau_min > 0.0 && cfg.tau_min < cfg.tau_max)) {
    throw UsageError("invalid temperature clamp");
  }
}

}  // namespace

TrainResult train(AdapterState state, const ContrastiveBatch& contrastive_data,
                  const PearsonBatch& rated_data, const TrainConfig& cfg) {
  validate(cfg);
  const bool use_c = cfg.loss_mode != LossMode::pearson_only;
  const bool use_p = cfg.loss_mode != LossMode::contrastive_only;
  if (use_c) {
    if (contrastive_data.size() < 2) throw UsageError("contrastive data needs at least 2 pairs");
    check_pairs(contrastive_data.images, contrastive_data.texts, state);
  }
  if (use_p) {
    if (rated_data.size() < 3) throw UsageError("rated data needs at least 3 pairs");
    check_pairs(rated_data.images, rated_data.texts, state);
    if (rated_data.ratings.size() != rated_data.size()) {
      throw UsageError("ratings not aligned with rated pairs");
    }
  }

  const auto base_c = use_c ? canonical_order(contrastive_data.images, contrastive_data.texts,
                                              nullptr)
                            : std::vector<Eigen::Index>{};
  const auto base_p = use_p ? canonical_order(rated_data.images, rated_data.texts,
                                              &rated_data.ratings)
                            : std::vector<Eigen::Index>{};
  const std::uint64_t c_key = derive_seed(cfg.seed, "contrastive-shuffle");
  const std::uint64_t p_key = derive_seed(cfg.seed, "pearson-shuffle");
  const double log_tau_min = std::log(cfg.tau_min);
  const double log_tau_max = std::log(cfg.tau_max);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::vector<Eigen::Index>> c_batches, p_batches;
    if (use_c) {
      auto order = base_c;
      shuffle(order, stream_seed(c_key, static_cast<std::uint64_t>(epoch)));
      const std::size_t size = std::min(cfg.batch_size, order.size());
      c_batches = make_batches(order, std::max<std::size_t>(size, 2), 2);
    }
    if (use_p) {
      auto order = base_p;
      shuffle(order, stream_seed(p_key, static_cast<std::uint64_t>(epoch)));
      const std::size_t size = std::min(cfg.batch_size, order.size());
      p_batches = make_batches(order, std::max<std::size_t>(size, 3), 3);
    }
    const std::size_t updates = std::max(c_batches.size(), p_batches.size());

    EpochSummary summary;
    summary.epoch = epoch;
    double c_sum = 0.0, p_sum = 0.0;
    std::size_t c_count = 0, p_count = 0, evaluated = 0;

    for (std::size_t u = 0; u < updates; ++u) {
      AdapterGradient grad = AdapterGradient::zero(state.dimension());
      LossPoint point;
      point.step = state.step;
      bool any = false;

      if (use_c) {
        const auto& idx = c_batches[u % c_batches.size()];
        const ContrastiveBatch batch{take_rows(contrastive_data.images, idx),
                                     take_rows(contrastive_data.texts, idx)};
        LossResult lc = contrastive_loss(state, batch);
        lc.grad *= cfg.contrastive_weight;
        grad += lc.grad;
        point.contrastive = lc.loss;
        c_sum += lc.loss;
        ++c_count;
        ++evaluated;
        any = true;
      }
      if (use_p) {
        const auto& idx = p_batches[u % p_batches.size()];
        Eigen::VectorXd ratings(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) {
          ratings[static_cast<Eigen::Index>(k)] = rated_data.ratings[idx[k]];
        }
        const PearsonBatch batch{take_rows(rated_data.images, idx),
                                 take_rows(rated_data.texts, idx), std::move(ratings)};
        ++evaluated;
        try {
          LossResult lp = pearson_loss(state, batch, cfg.clip, cfg.pearson_raw_cos);
          lp.grad *= cfg.pearson_weight;
          grad += lp.grad;
          point.pearson = lp.loss;
          p_sum += lp.loss;
          ++p_count;
          any = true;
        } catch (const DegenerateBatch&) {
          ++summary.skipped;
        }
      }

      result.curve.push_back(point);
      if (!any) continue;
      state.w_text -= cfg.learning_rate * grad.w_text;
      state.w_image -= cfg.learning_rate * grad.w_image;
      state.log_tau = std::clamp(state.log_tau - cfg.learning_rate * grad.log_tau, log_tau_min,
                                 log_tau_max);
      if (!state.w_text.allFinite() || !state.w_image.allFinite()) {
        throw NumericError("adapter weights diverged at step " + std::to_string(state.step));
      }
      ++state.step;
      ++summary.updates;
    }

    if (evaluated > 0 && 2 * summary.skipped > evaluated) {
      throw NumericError("epoch " + std::to_string(epoch) + ": " +
                         std::to_string(summary.skipped) + " of " + std::to_string(evaluated) +
                         " batches were degenerate");
    }
    if (c_count > 0) summary.mean_contrastive = c_sum / static_cast<double>(c_count);
    if (p_count > 0) summary.mean_pearson = p_sum / static_cast<double>(p_count);
    result.skipped_batches += summary.skipped;
    result.epochs.push_back(summary);
  }
  result.state = std::move(state);
  return result;
}

EmbeddingStore export_adapted_store(const AdapterState& state, const EmbeddingStore& store) {
  if (store.dimension() != state.dimension()) {
    throw UsageError("store dimension " + std::to_string(store.dimension()) +
                     " does not match adapter dimension " + std::to_string(state.dimension()));
  }
  EmbeddingStore out(store.dimension());
  for (const auto& record : store) {
    const auto& w = record.modality == Modality::image ? state.w_image : state.w_text;
    const Eigen::VectorXd mapped = w * record.vector.cast<double>();
    const double norm = mapped.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw NumericError("adapter maps '" + record.id + "' to a degenerate vector");
    }
    Eigen::VectorXf unit = std::abs(norm - 1.0) <= kUnitNormTolerance
                               ? Eigen::VectorXf(mapped.cast<float>())
                               : Eigen::VectorXf((mapped / norm).cast<float>());
    out.add(record.id, std::move(unit), record.modality);
  }
  return out;
}

Eigen::MatrixXd gather_rows(const EmbeddingStore& store, std::span<const std::string> ids) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()),
                      static_cast<Eigen::Index>(store.dimension()));
  for (std::size_t k = 0; k < ids.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = store.at(ids[k]).vector.cast<double>().transpose();
  }
  return out;
}

namespace {

void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
      out.write(bytes, 8);
    }
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, Eigen::Index d, const std::string& source) {
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      unsigned char bytes[8];
      in.read(reinterpret_cast<char*>(bytes), 8);
      if (in.gcount() != 8) throw CorruptionError(source + ": truncated adapter matrix");
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      m(i, j) = std::bit_cast<double>(bits);
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const AdapterState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  nlohmann::ordered_json header;
  header["dim"] = state.dimension();
  header["tau"] = state.tau();
  header["step"] = state.step;
  out << header.dump() << '\n';
  write_matrix(out, state.w_text);
  write_matrix(out, state.w_image);
  out.flush();
  if (!out) throw IoError(path.string() + ": write failed");
}

AdapterState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": file not found or unreadable");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": missing checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
    AdapterState state;
    const auto d = header.at("dim").get<Eigen::Index>();
    const double tau = header.at("tau").get<double>();
    if (d <= 0 || !(tau > 0.0)) throw FormatError(path.string() + ": invalid checkpoint header");
    state.log_tau = std::log(tau);
    state.step = header.at("step").get<std::int64_t>();
    state.w_text = read_matrix(in, d, path.string());
    state.w_image = read_matrix(in, d, path.string());
    if (in.peek() != std::char_traits<char>::eof()) {
      throw CorruptionError(path.string() + ": trailing bytes after adapter matrices");
    }
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad checkpoint header (" + e.what() + ")");
  }
}

void write_loss_curve_csv(std::span<const LossPoint> curve, std::ostream& out) {
  out << "step,loss_contrastive,loss_pearson\n";
  for (const auto& p : curve) {
    out << p.step << ',';
    if (p.contrastive) out << csv::format_fixed(*p.contrastive, 9);
    out << ',';
    if (p.pearson) out << csv::format_fixed(*p.pearson, 9);
    out << '\n';
  }
}

}  // namespace capeval
