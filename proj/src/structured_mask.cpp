#include "ahl/structured_mask.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "ahl/errors.hpp"
#include "ahl/ops.hpp"

namespace ahl {

struct MaskAccess {
  static StructuredMask ones(MaskDims dims) {
    if (dims.layers <= 0 || dims.heads <= 0 || dims.seq <= 0) {
      throw ContractError("mask dims must be positive, got (" + std::to_string(dims.layers) + "," +
                          std::to_string(dims.heads) + "," + std::to_string(dims.seq) + ")");
    }
    StructuredMask m;
    m.dims_ = dims;
    m.bits_ = static_cast<std::size_t>(dims.layers) * dims.heads * dims.seq * dims.seq;
    m.words_.assign((m.bits_ + 63) / 64, ~std::uint64_t{0});
    if (m.bits_ % 64) m.words_.back() = (std::uint64_t{1} << (m.bits_ % 64)) - 1;
    return m;
  }
  static void clear(StructuredMask& m, int i, int j, int k, int l) { m.clear(m.index(i, j, k, l)); }
  static void set(StructuredMask& m, int i, int j, int k, int l) {
    auto idx = m.index(i, j, k, l);
    m.words_[idx >> 6] |= std::uint64_t{1} << (idx & 63);
  }
  static std::size_t xor_popcount_head(const StructuredMask& a, const StructuredMask& b, int i, int j) {
    std::size_t n = 0;
    const int s = a.dims_.seq;
    for (int k = 0; k < s; ++k)
      for (int l = 0; l < s; ++l) n += a.attends(i, j, k, l) != b.attends(i, j, k, l);
    return n;
  }
};

StructuredMask expand_base(int layers, int heads, int seq) { return MaskAccess::ones({layers, heads, seq}); }

StructuredMask StructuredMask::from_bits(MaskDims dims, const std::vector<bool>& bits) {
  StructuredMask m = MaskAccess::ones(dims);
  if (bits.size() != m.bits_) {
    throw DimensionError("from_bits: expected " + std::to_string(m.bits_) + " bits, got " + std::to_string(bits.size()));
  }
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (!bits[i]) m.clear(i);
  for (int i = 0; i < dims.layers; ++i)
    for (int j = 0; j < dims.heads; ++j)
      for (int k = 0; k < dims.seq; ++k)
        if (m.row_ones(i, j, k) == 0) {
          throw ContractError("from_bits: row (" + std::to_string(i) + "," + std::to_string(j) + "," +
                              std::to_string(k) + ") has no attended unit");
        }
  return m;
}

std::size_t StructuredMask::row_ones(int layer, int head, int row) const {
  std::size_t n = 0;
  for (int l = 0; l < dims_.seq; ++l) n += attends(layer, head, row, l);
  return n;
}

std::size_t StructuredMask::count_ones() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::size_t StructuredMask::count_zeros() const { return bits_ - count_ones(); }

bool StructuredMask::head_is_open(int layer, int head) const {
  for (int k = 0; k < dims_.seq; ++k)
    if (row_ones(layer, head, k) != static_cast<std::size_t>(dims_.seq)) return false;
  return true;
}

std::vector<double> StructuredMask::additive(int layer, int head) const {
  const int n = dims_.seq;
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      if (!attends(layer, head, k, l)) out[static_cast<std::size_t>(k) * n + l] = kMaskedLogit;
  return out;
}

std::vector<std::array<std::uint32_t, 4>> StructuredMask::zero_cells() const {
  std::vector<std::array<std::uint32_t, 4>> out;
  for (int i = 0; i < dims_.layers; ++i)
    for (int j = 0; j < dims_.heads; ++j)
      for (int k = 0; k < dims_.seq; ++k)
        for (int l = 0; l < dims_.seq; ++l)
          if (!attends(i, j, k, l)) {
            out.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                           static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(l)});
          }
  return out;
}

std::size_t units_to_mask(double alpha, int seq) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("units_to_mask: alpha must lie in (0, 1]");
  if (seq <= 0) throw ContractError("units_to_mask: N must be positive");
  const double cells = static_cast<double>(seq) * static_cast<double>(seq);
  // Relative nudge so decimal alphas like 0.29 * 100 do not floor to 28.
  const auto n = static_cast<std::size_t>(std::floor(alpha * cells * (1.0 + 1e-12)));
  return std::max<std::size_t>(1, n);
}

SelectionOutcome apply_selection(const StructuredMask& mask, const UnitSelection& sel) {
  const auto& d = mask.dims();
  if (sel.layer < 0 || sel.layer >= d.layers || sel.head < 0 || sel.head >= d.heads) {
    throw ContractError("apply_selection: head (" + std::to_string(sel.layer) + "," + std::to_string(sel.head) +
                        ") outside mask");
  }
  SelectionOutcome out{mask, {}, 0};
  std::vector<std::size_t> row_ones(static_cast<std::size_t>(d.seq));
  for (int k = 0; k < d.seq; ++k) row_ones[k] = mask.row_ones(sel.layer, sel.head, k);
  for (const Cell& c : sel.cells) {
    if (c.row < 0 || c.row >= d.seq || c.col < 0 || c.col >= d.seq) {
      throw ContractError("apply_selection: cell (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                          ") outside " + std::to_string(d.seq) + "x" + std::to_string(d.seq));
    }
    if (!out.mask.attends(sel.layer, sel.head, c.row, c.col)) continue;
    if (row_ones[c.row] <= 1) {
      ++out.safeguard_hits;
      continue;
    }
    MaskAccess::clear(out.mask, sel.layer, sel.head, c.row, c.col);
    --row_ones[c.row];
    out.zeroed.push_back(c);
  }
  return out;
}

HammingDistance hamming(const StructuredMask& a, const StructuredMask& b) {
  if (!(a.dims() == b.dims())) throw ContractError("hamming: mask dims differ");
  HammingDistance h;
  for (int i = 0; i < a.dims().layers; ++i)
    for (int j = 0; j < a.dims().heads; ++j) {
      const auto n = MaskAccess::xor_popcount_head(a, b, i, j);
      h.total_bits += n;
      h.n_perturbed += n > 0;
    }
  h.per_matrix_avg = h.n_perturbed ? static_cast<double>(h.total_bits) / static_cast<double>(h.n_perturbed) : 0.0;
  return h;
}

StructuredMask sample_bernoulli(int layers, int heads, int seq, double alpha_s, std::uint64_t seed) {
  if (!(alpha_s >= 0.0 && alpha_s < 1.0)) throw ContractError("sample_bernoulli: alpha_s must lie in [0, 1)");
  StructuredMask m = expand_base(layers, heads, seq);
  if (alpha_s == 0.0) return m;
  std::mt19937_64 rng(seed);
  constexpr double kInv53 = 1.0 / 9007199254740992.0;
  for (int i = 0; i < layers; ++i)
    for (int j = 0; j < heads; ++j)
      for (int k = 0; k < seq; ++k) {
        int kept = 0;
        for (int l = 0; l < seq; ++l) {
          const double u = static_cast<double>(rng() >> 11) * kInv53;
          if (u < alpha_s) {
            MaskAccess::clear(m, i, j, k, l);
          } else {
            ++kept;
          }
        }
        if (kept == 0) MaskAccess::set(m, i, j, k, static_cast<int>(rng() % static_cast<std::uint64_t>(seq)));
      }
  return m;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("mask record truncated");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

}  // namespace

void write_mask_record(std::ostream& out, const StructuredMask& mask) {
  const auto cells = mask.zero_cells();
  put_u32(out, static_cast<std::uint32_t>(cells.size()));
  for (const auto& c : cells)
    for (auto v : c) put_u32(out, v);
}

std::vector<std::array<std::uint32_t, 4>> read_mask_record(std::istream& in) {
  const auto n = get_u32(in);
  std::vector<std::array<std::uint32_t, 4>> cells(n);
  for (auto& c : cells)
    for (auto& v : c) v = get_u32(in);
  return cells;
}

}  // namespace ahl
