#pragma once

#include "thz/core.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <vector>

namespace thz {

/// Unit-energy 16-QAM with Gray-coded 2-bit levels per axis; bits b0 b1 -> I, b2 b3 -> Q.
struct Qam16 {
    static constexpr int order = 16;
    static double level(int gray2) {
        static constexpr std::array<double, 4> lv{-3.0, -1.0, 3.0, 1.0};  // 00, 01, 10, 11
        return lv[gray2] / std::sqrt(10.0);
    }
    static cd point(int index) { return {level((index >> 2) & 3), level(index & 3)}; }
    static int axis_decide(double v) {
        const double t = 2.0 / std::sqrt(10.0);
        if (v < -t) return 0;
        if (v < 0.0) return 1;
        if (v < t) return 3;
        return 2;
    }
    static int decide(cd z) { return (axis_decide(z.real()) << 2) | axis_decide(z.imag()); }
};

using Bits = std::vector<std::uint8_t>;

inline std::vector<cd> modulate(const Bits& bits) {
    if (bits.size() % 4 != 0) throw ArgumentError("modulate: bit count must be divisible by 4");
    std::vector<cd> out(bits.size() / 4);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto* b = &bits[4 * k];
        out[k] = Qam16::point((b[0] << 3) | (b[1] << 2) | (b[2] << 1) | b[3]);
    }
    return out;
}

inline Bits demodulate_hard(const std::vector<cd>& symbols) {
    Bits out(symbols.size() * 4);
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        const int idx = Qam16::decide(symbols[k]);
        for (int b = 0; b < 4; ++b) out[4 * k + b] = static_cast<std::uint8_t>((idx >> (3 - b)) & 1);
    }
    return out;
}

/// Nearest constellation point per entry.
inline CMat hard_decision(const CMat& z) {
    return z.unaryExpr([](cd v) { return Qam16::point(Qam16::decide(v)); });
}

/// Uniform random 16-QAM block together with the symbol indices.
struct SymbolBlock {
    CMat s;
    Eigen::MatrixXi idx;
};

inline SymbolBlock random_symbols(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    SymbolBlock b{CMat(rows, cols), Eigen::MatrixXi(rows, cols)};
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) {
            b.idx(i, j) = static_cast<int>(rng.below(16));
            b.s(i, j) = Qam16::point(b.idx(i, j));
        }
    return b;
}

inline std::size_t count_symbol_errors(const Eigen::MatrixXi& tx_idx, const CMat& rx) {
    if (tx_idx.rows() != rx.rows() || tx_idx.cols() != rx.cols()) throw ArgumentError("ser: size mismatch");
    std::size_t e = 0;
    for (Eigen::Index j = 0; j < rx.cols(); ++j)
        for (Eigen::Index i = 0; i < rx.rows(); ++i) e += Qam16::decide(rx(i, j)) != tx_idx(i, j);
    return e;
}

/// Fraction of positions whose hard decisions differ.
inline double ser(const std::vector<cd>& tx, const std::vector<cd>& rx) {
    if (tx.size() != rx.size()) throw ArgumentError("ser: length mismatch");
    if (tx.empty()) return 0.0;
    std::size_t e = 0;
    for (std::size_t k = 0; k < tx.size(); ++k) e += Qam16::decide(tx[k]) != Qam16::decide(rx[k]);
    return static_cast<double>(e) / static_cast<double>(tx.size());
}

// Flat stream files: u16 magic, u16 version, u32 length, then payload (little-endian).
inline constexpr std::uint16_t kBitsMagic = 0x4254;
inline constexpr std::uint16_t kSymbolsMagic = 0x5354;
inline constexpr std::uint16_t kStreamVersion = 1;

namespace detail {
inline void write_header(std::ofstream& f, std::uint16_t magic, std::uint32_t n) {
    f.write(reinterpret_cast<const char*>(&magic), 2);
    f.write(reinterpret_cast<const char*>(&kStreamVersion), 2);
    f.write(reinterpret_cast<const char*>(&n), 4);
}
inline std::uint32_t read_header(std::ifstream& f, std::uint16_t magic) {
    std::uint16_t m = 0, v = 0;
    std::uint32_t n = 0;
    f.read(reinterpret_cast<char*>(&m), 2);
    f.read(reinterpret_cast<char*>(&v), 2);
    f.read(reinterpret_cast<char*>(&n), 4);
    if (!f || m != magic || v != kStreamVersion) throw ArgumentError("stream file: bad header");
    return n;
}
}  // namespace detail

inline void write_bits(const std::string& path, const Bits& bits) {
    std::ofstream f(path, std::ios::binary);
    detail::write_header(f, kBitsMagic, static_cast<std::uint32_t>(bits.size()));
    f.write(reinterpret_cast<const char*>(bits.data()), static_cast<std::streamsize>(bits.size()));
}

inline Bits read_bits(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    Bits b(detail::read_header(f, kBitsMagic));
    f.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(b.size()));
    if (!f) throw ArgumentError("stream file: truncated");
    return b;
}

inline void write_symbols(const std::string& path, const std::vector<cd>& s) {
    std::ofstream f(path, std::ios::binary);
    detail::write_header(f, kSymbolsMagic, static_cast<std::uint32_t>(s.size()));
    for (const cd& z : s) {
        const double re = z.real(), im = z.imag();
        f.write(reinterpret_cast<const char*>(&re), 8);
        f.write(reinterpret_cast<const char*>(&im), 8);
    }
}

inline std::vector<cd> read_symbols(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::vector<cd> s(detail::read_header(f, kSymbolsMagic));
    for (cd& z : s) {
        double re = 0, im = 0;
        f.read(reinterpret_cast<char*>(&re), 8);
        f.read(reinterpret_cast<char*>(&im), 8);
        z = {re, im};
    }
    if (!f) throw ArgumentError("stream file: truncated");
    return s;
}

}  // namespace thz
