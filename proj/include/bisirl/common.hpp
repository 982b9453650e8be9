#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace bisirl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
  public:
   using std::runtime_error::runtime_error;
};

/// A game, policy or probability table violates its invariants.
class InvalidGame : public Error {
  public:
   using Error::Error;
};

/// Tensor or vector dimensions disagree.
class ShapeMismatch : public Error {
  public:
   using Error::Error;
};

/// A caller-supplied value is outside its documented domain.
class InvalidArgument : public Error {
  public:
   using Error::Error;
};

/// Conjugate gradient met a direction of non-positive curvature.
class NotPositiveDefinite : public Error {
  public:
   using Error::Error;
};

/// Malformed or inconsistent experiment / environment configuration.
class ConfigError : public Error {
  public:
   using Error::Error;
};

/// Seeded random stream. Every stochastic routine takes one of these
/// explicitly; nothing in the library touches global randomness.
///
/// Uniform draws are built from raw 64-bit engine output so sequences are
/// identical across standard library implementations.
class Rng {
  public:
   explicit Rng(std::uint64_t seed) : engine_(seed) {}

   std::uint64_t next() { return engine_(); }

   /// Uniform on [0, 1) with 53 random bits.
   double uniform() { return static_cast< double >(engine_() >> 11) * 0x1.0p-53; }

   /// +1 or -1 with equal probability.
   double rademacher() { return (engine_() >> 63) != 0U ? 1.0 : -1.0; }

   /// Standard exponential variate, used for flat Dirichlet draws.
   double exponential() { return -std::log1p(-uniform()); }

   /// Index drawn from an unnormalized-tolerant probability row. Falls back to
   /// the last index with positive mass when rounding leaves the cumulative sum
   /// short of the uniform draw.
   int categorical(std::span< const double > probs)
   {
      const double u = uniform();
      double acc = 0.0;
      int last_positive = 0;
      for(std::size_t i = 0; i < probs.size(); ++i) {
         if(probs[i] > 0.0) {
            last_positive = static_cast< int >(i);
         }
         acc += probs[i];
         if(u < acc) {
            return static_cast< int >(i);
         }
      }
      return last_positive;
   }

   /// Independent child stream; advances this stream by one draw.
   Rng fork() { return Rng(engine_()); }

  private:
   std::mt19937_64 engine_;
};

}  // namespace bisirl
