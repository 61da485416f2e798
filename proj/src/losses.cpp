#include "oner/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "oner/errors.hpp"
#include "oner/prototype_banks.hpp"

namespace oner {

Tensor loss_align(Tape& tape, const Tensor& k_image, const Tensor& prototype) {
  if (k_image.size() != prototype.size()) {
    throw std::invalid_argument("loss_align: shape mismatch");
  }
  Tensor diff = k_image.shape() == prototype.shape()
                    ? sub(tape, k_image, prototype)
                    : sub(tape, k_image,
                          Tensor(k_image.shape(),
                                 {prototype.data().begin(),
                                  prototype.data().end()}));
  return norm2(tape, diff);
}

Tensor loss_itc(Tape& tape, const Tensor& k_pixels,
                const PixelPrototypeBank& history) {
  if (!k_pixels.is_matrix()) {
    throw std::invalid_argument("loss_itc: patch features must be a matrix");
  }
  if (history.size() == 0) return Tensor::scalar(0.0);

  const std::size_t np = k_pixels.rows();
  const std::size_t d = k_pixels.cols();
  std::vector<Tensor> proto_rows;
  for (const auto& entry : history.entries()) {
    if (entry.dim != d) {
      throw std::invalid_argument("loss_itc: prototype dim mismatch");
    }
    for (std::size_t r = 0; r < entry.rows; ++r) {
      auto row = entry.row(r);
      proto_rows.emplace_back(std::vector<std::size_t>{d},
                              std::vector<double>(row.begin(), row.end()));
    }
  }

  Tensor acc;
  for (std::size_t i = 0; i < np; ++i) {
    Tensor patch = slice_rows(tape, k_pixels, i, i + 1);
    std::vector<Tensor> sims;
    sims.reserve(proto_rows.size());
    for (const Tensor& p : proto_rows) {
      sims.push_back(cosine_similarity(tape, patch, p));
    }
    Tensor patch_max = maximum_of(tape, sims);
    acc = i == 0 ? patch_max : add(tape, acc, patch_max);
  }
  return scale(tape, acc, 1.0 / static_cast<double>(np));
}

TscLoss loss_tsc(Tape& tape, const Tensor& k_pixels, const PatchLabels& labels,
                 TscSign sign) {
  if (!k_pixels.is_matrix()) {
    throw std::invalid_argument("loss_tsc: patch features must be a matrix");
  }
  const std::size_t np = k_pixels.rows();
  if (labels.size() != np) {
    throw std::invalid_argument("loss_tsc: label count != patch count");
  }

  std::vector<Tensor> patch_rows;
  patch_rows.reserve(np);
  for (std::size_t i = 0; i < np; ++i) {
    patch_rows.push_back(slice_rows(tape, k_pixels, i, i + 1));
  }

  TscLoss out;
  Tensor pos_sum, neg_sum;
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = 0; j < np; ++j) {
      if (i == j) continue;  // self-pairs carry no signal
      Tensor c = cosine_similarity(tape, patch_rows[i], patch_rows[j]);
      if (labels[i] == labels[j]) {
        pos_sum = pos_sum.valid() ? add(tape, pos_sum, c) : c;
        ++out.pos_pairs;
      } else {
        neg_sum = neg_sum.valid() ? add(tape, neg_sum, c) : c;
        ++out.neg_pairs;
      }
    }
  }

  Tensor pos = out.pos_pairs > 0
                   ? scale(tape, pos_sum, 1.0 / static_cast<double>(out.pos_pairs))
                   : Tensor::scalar(0.0);
  Tensor neg = out.neg_pairs > 0
                   ? scale(tape, neg_sum, 1.0 / static_cast<double>(out.neg_pairs))
                   : Tensor::scalar(0.0);
  out.value = sign == TscSign::kNegMinusPos ? sub(tape, neg, pos)
                                            : sub(tape, pos, neg);
  return out;
}

Tensor loss_ipr(Tape& tape, const Tensor& candidate, const Tensor& raw,
                const ImagePrototypeBank& history) {
  Tensor sim = scale(tape, cosine_similarity(tape, candidate, raw), -1.0);
  if (history.size() == 0) return sim;

  std::vector<Tensor> sims;
  sims.reserve(history.size());
  for (const auto& entry : history.entries()) {
    Tensor proto({entry.values.size()},
                 {entry.values.begin(), entry.values.end()});
    sims.push_back(cosine_similarity(tape, candidate, proto));
  }
  return add(tape, sim, maximum_of(tape, sims));
}

Tensor loss_total(Tape& tape, const Tensor& align, const Tensor& tsc,
                  const Tensor& itc) {
  return add(tape, add(tape, align, tsc), itc);
}

LossReport make_loss_report(double align, double tsc, double itc,
                            std::size_t pos_pairs, std::size_t neg_pairs) {
  if (!std::isfinite(align) || !std::isfinite(tsc) || !std::isfinite(itc)) {
    throw NumericError("loss report: non-finite loss term");
  }
  LossReport r;
  r.align = align;
  r.tsc = tsc;
  r.itc = itc;
  r.total = align + tsc + itc;
  r.tsc_pos_pairs = pos_pairs;
  r.tsc_neg_pairs = neg_pairs;
  return r;
}

}  // namespace oner
