#ifndef EVFI_RNG_HPP
#define EVFI_RNG_HPP

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>

namespace evfi {

// Deterministic RNG with hand-rolled distributions so that sampled values are
// identical across standard libraries and build modes (std::*_distribution is
// implementation-defined). splitmix64 core, 2^64 period is plenty here.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97f4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // integer in [0, n)
    uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

    // Box-Muller; one value per call (the pair's second half is discarded to
    // keep the stream position a simple function of call count).
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // exponential inter-arrival gap with the given rate
    double exponential(double rate) {
        double u = uniform();
        if (u < 1e-300) u = 1e-300;
        return -std::log(u) / rate;
    }

    // child stream, decorrelated from the parent
    Rng fork(uint64_t salt) {
        Rng r(state_ ^ (0xA5A5A5A5DEADBEEFULL + salt * 0x9E3779B97f4A7C15ULL));
        r.next_u64();
        return r;
    }

    std::string serialize() const {
        std::ostringstream os;
        os << state_;
        return os.str();
    }
    static Rng deserialize(const std::string& s) {
        Rng r;
        std::istringstream is(s);
        is >> r.state_;
        return r;
    }

  private:
    uint64_t state_ = 0;
};

} // namespace evfi

#endif
