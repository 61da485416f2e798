#pragma once

#include <cstddef>
#include <vector>

#include "oner/tensor.hpp"

namespace oner {

class ImagePrototypeBank;
class PixelPrototypeBank;

// Per-patch class ids produced by the segment labeler.
using PatchLabels = std::vector<int>;

// Which way the class-contrastive loss is signed. kNegMinusPos drives
// same-class similarity up and cross-class similarity down under
// minimization; kPosMinusNeg is the inverted form kept behind this switch
// for comparison runs.
enum class TscSign { kNegMinusPos, kPosMinusNeg };

struct LossReport {
  double align = 0.0;
  double tsc = 0.0;
  double itc = 0.0;
  double total = 0.0;  // align + tsc + itc exactly, in that order
  std::size_t tsc_pos_pairs = 0;
  std::size_t tsc_neg_pairs = 0;
};

struct TscLoss {
  Tensor value;
  std::size_t pos_pairs = 0;  // ordered same-class pairs
  std::size_t neg_pairs = 0;  // ordered cross-class pairs
};

// ||k_I - prototype||_2.
Tensor loss_align(Tape& tape, const Tensor& k_image, const Tensor& prototype);

// Mean over patches of the max cosine to any historical pixel prototype;
// 0 when the history is empty.
Tensor loss_itc(Tape& tape, const Tensor& k_pixels,
                const PixelPrototypeBank& history);

// Ordered-pair class contrast over patch features; each of the two terms is
// normalized by its pair count, and a class with no pairs contributes 0.
TscLoss loss_tsc(Tape& tape, const Tensor& k_pixels, const PatchLabels& labels,
                 TscSign sign = TscSign::kNegMinusPos);

// -cos(candidate, raw) + max over history of cos(candidate, entry); the max
// over an empty history is 0.
Tensor loss_ipr(Tape& tape, const Tensor& candidate, const Tensor& raw,
                const ImagePrototypeBank& history);

Tensor loss_total(Tape& tape, const Tensor& align, const Tensor& tsc,
                  const Tensor& itc);
LossReport make_loss_report(double align, double tsc, double itc,
                            std::size_t pos_pairs = 0,
                            std::size_t neg_pairs = 0);

}  // namespace oner
