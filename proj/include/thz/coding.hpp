#pragma once

#include "thz/modem.hpp"

#include <algorithm>
#include <bit>
#include <limits>

namespace thz {

/// K=7 (171,133) mother code punctured to rate 2/3 (A: 11, B: 10).
struct ConvCode {
    static constexpr int k = 7;
    static constexpr int n_states = 1 << (k - 1);
    static constexpr unsigned g0 = 0171;
    static constexpr unsigned g1 = 0133;
    static constexpr std::array<std::uint8_t, 2> punct_a{1, 1};
    static constexpr std::array<std::uint8_t, 2> punct_b{1, 0};
    int traceback = 5 * k;

    /// Output pair for shift register contents reg (newest bit at the MSB of a 7-bit word).
    static std::pair<int, int> outputs(unsigned reg) {
        return {std::popcount(reg & g0) & 1, std::popcount(reg & g1) & 1};
    }
    static std::size_t coded_length(std::size_t n_in) {
        std::size_t n = 0;
        for (std::size_t t = 0; t < n_in; ++t) n += punct_a[t % 2] + punct_b[t % 2];
        return n;
    }
};

/// Encodes bits and appends K-1 zero tail bits; output is punctured.
inline Bits conv_encode(const Bits& info, const ConvCode& code = {}) {
    Bits in = info;
    in.insert(in.end(), ConvCode::k - 1, 0);
    Bits out;
    out.reserve(ConvCode::coded_length(in.size()));
    unsigned state = 0;
    for (std::size_t t = 0; t < in.size(); ++t) {
        const unsigned reg = (static_cast<unsigned>(in[t] & 1) << (ConvCode::k - 1)) | state;
        const auto [a, b] = ConvCode::outputs(reg);
        if (code.punct_a[t % 2]) out.push_back(static_cast<std::uint8_t>(a));
        if (code.punct_b[t % 2]) out.push_back(static_cast<std::uint8_t>(b));
        state = reg >> 1;
    }
    return out;
}

/// Hard-decision Viterbi over the punctured stream (erased positions carry no metric).
/// Decisions older than the traceback depth are released from the best survivor;
/// the terminated tail is traced back from the zero state.
inline Bits viterbi_decode(const Bits& coded, std::size_t n_info, const ConvCode& code = {}) {
    constexpr int ns = ConvCode::n_states;
    const std::size_t n_steps = n_info + ConvCode::k - 1;
    if (coded.size() != ConvCode::coded_length(n_steps)) throw ArgumentError("viterbi_decode: length mismatch");
    constexpr int inf = std::numeric_limits<int>::max() / 4;
    std::array<int, ns> metric{}, next{};
    metric.fill(inf);
    metric[0] = 0;
    std::vector<std::array<std::uint8_t, ns>> from(n_steps);
    std::array<std::array<std::uint8_t, 2>, 2 * ns> out_table{};
    for (unsigned reg = 0; reg < 2u * ns; ++reg) {
        const auto [a, b] = ConvCode::outputs(reg);
        out_table[reg] = {static_cast<std::uint8_t>(a), static_cast<std::uint8_t>(b)};
    }
    Bits decoded(n_info, 0);
    const std::size_t depth = static_cast<std::size_t>(std::max(code.traceback, 1));
    auto trace = [&](int state, std::size_t t_end, std::size_t t_out) {
        for (std::size_t t = t_end + 1; t-- > t_out + 1;) state = (state << 1 | from[t][state]) & (ns - 1);
        return (state >> (ConvCode::k - 2)) & 1;
    };
    std::size_t pos = 0;
    for (std::size_t t = 0; t < n_steps; ++t) {
        const bool use_a = code.punct_a[t % 2], use_b = code.punct_b[t % 2];
        const int ra = use_a ? coded[pos] : 0;
        const int rb = use_b ? coded[pos + use_a] : 0;
        pos += use_a + use_b;
        next.fill(inf);
        for (int s = 0; s < ns; ++s) {
            // Predecessors of s: p = ((s << 1) | low) & mask with input bit = MSB of s.
            const int bit = (s >> (ConvCode::k - 2)) & 1;
            for (int low = 0; low < 2; ++low) {
                const int p = ((s << 1) | low) & (ns - 1);
                if (metric[p] >= inf) continue;
                const unsigned reg = (static_cast<unsigned>(bit) << (ConvCode::k - 1)) | static_cast<unsigned>(p);
                const auto& o = out_table[reg];
                const int bm = (use_a ? (o[0] != ra) : 0) + (use_b ? (o[1] != rb) : 0);
                const int m = metric[p] + bm;
                if (m < next[s]) {
                    next[s] = m;
                    from[t][s] = static_cast<std::uint8_t>(low);
                }
            }
        }
        metric = next;
        if (t >= depth && t - depth < n_info) {
            const int best = static_cast<int>(std::min_element(metric.begin(), metric.end()) - metric.begin());
            decoded[t - depth] = static_cast<std::uint8_t>(trace(best, t, t - depth));
        }
    }
    // Remaining decisions from the terminated zero state.
    const std::size_t first_pending = n_steps - 1 >= depth ? n_steps - depth : 0;
    int state = 0;
    for (std::size_t t = n_steps; t-- > 0;) {
        if (t < n_info && t >= first_pending) decoded[t] = static_cast<std::uint8_t>((state >> (ConvCode::k - 2)) & 1);
        state = (state << 1 | from[t][state]) & (ns - 1);
    }
    return decoded;
}

}  // namespace thz
