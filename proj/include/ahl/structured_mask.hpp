#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace ahl {

struct MaskDims {
  int layers = 0;
  int heads = 0;
  int seq = 0;  // N, the number of non-padding tokens
  bool operator==(const MaskDims&) const = default;
};

struct Cell {
  int row = 0;  // query index k
  int col = 0;  // key index l
  bool operator==(const Cell&) const = default;
};

// Binary attention mask over [layers, heads, N, N]; 1 = attend, 0 = masked.
// Every (layer, head, row) keeps at least one attended unit.
class StructuredMask {
 public:
  StructuredMask() = default;

  // Validates dims and the row safeguard. bits are row-major over
  // [layers, heads, N, N].
  static StructuredMask from_bits(MaskDims dims, const std::vector<bool>& bits);

  const MaskDims& dims() const { return dims_; }
  bool attends(int layer, int head, int row, int col) const { return test(index(layer, head, row, col)); }
  std::size_t row_ones(int layer, int head, int row) const;
  std::size_t count_ones() const;
  std::size_t count_zeros() const;
  bool head_is_open(int layer, int head) const;

  // N x N block of 0 / kMaskedLogit values for one head.
  std::vector<double> additive(int layer, int head) const;

  // All masked cells as (layer, head, row, col).
  std::vector<std::array<std::uint32_t, 4>> zero_cells() const;

  bool operator==(const StructuredMask& o) const { return dims_ == o.dims_ && words_ == o.words_; }

 private:
  friend StructuredMask expand_base(int, int, int);
  friend struct MaskAccess;
  std::size_t index(int layer, int head, int row, int col) const {
    return ((static_cast<std::size_t>(layer) * dims_.heads + head) * dims_.seq + row) * dims_.seq + col;
  }
  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void clear(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }

  MaskDims dims_;
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

// All-ones mask.
StructuredMask expand_base(int layers, int heads, int seq);

// max(1, floor(alpha * N^2)).
std::size_t units_to_mask(double alpha, int seq);

struct UnitSelection {
  int layer = 0;
  int head = 0;
  std::vector<Cell> cells;  // in rank order, best first
};

struct SelectionOutcome {
  StructuredMask mask;
  std::vector<Cell> zeroed;     // cells that flipped 1 -> 0
  std::size_t safeguard_hits = 0;
};

// Zeroes the selected cells in rank order. A cell whose zeroing would leave
// its row without an attended unit is skipped and counted as a safeguard hit.
SelectionOutcome apply_selection(const StructuredMask& mask, const UnitSelection& sel);

struct HammingDistance {
  std::size_t total_bits = 0;
  double per_matrix_avg = 0.0;
  std::size_t n_perturbed = 0;
  bool operator==(const HammingDistance&) const = default;
};

HammingDistance hamming(const StructuredMask& a, const StructuredMask& b);

// Each cell masked independently with probability alpha_s. A row that comes
// out empty gets one uniformly chosen cell restored.
StructuredMask sample_bernoulli(int layers, int heads, int seq, double alpha_s, std::uint64_t seed);

// Mask trace record: u32 count, then count x (layer, head, row, col), all
// little-endian u32, listing the masked cells.
void write_mask_record(std::ostream& out, const StructuredMask& mask);
std::vector<std::array<std::uint32_t, 4>> read_mask_record(std::istream& in);

}  // namespace ahl
