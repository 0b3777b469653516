#pragma once

#include <stdexcept>
#include <string>

namespace pmtp {

// Upper-tail tapered shift policy on a treatment with support [c, d].
//
//   q(a) = a + delta                        for a in [c, d - eps - delta]
//        = a + delta * (d - a)/(delta+eps)  for a in (d - eps - delta, d - r(eps+delta)]
//
// r = 0 tapers the shift to zero at d so the whole support is covered;
// r = 1 drops the taper branch, giving a plain shift on the restricted
// subpopulation S = [c, d - eps - delta]. delta = 0 yields the identity.
//
// Immutable value object; safe to share across threads.
class TaperedShiftPolicy {
 public:
  TaperedShiftPolicy(double delta, double epsilon, int r, double c, double d)
      : delta_(delta), epsilon_(epsilon), r_(r), c_(c), d_(d) {
    if (!(delta >= 0.0)) throw std::invalid_argument("policy: delta must be >= 0");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("policy: epsilon must be >= 0");
    if (r != 0 && r != 1) throw std::invalid_argument("policy: r must be 0 or 1");
    if (!(c + delta < d - epsilon))
      throw std::invalid_argument("policy: requires c + delta < d - epsilon");
    if (r == 1 && !(epsilon + delta <= d - c))
      throw std::invalid_argument("policy: r=1 requires epsilon + delta <= d - c");
    if (r == 0 && delta > 0.0 && !(epsilon > 0.0))
      throw std::invalid_argument("policy: r=0 with delta > 0 requires epsilon > 0");
  }

  static TaperedShiftPolicy identity(double c, double d) {
    return TaperedShiftPolicy(0.0, 0.0, 1, c, d);
  }

  double delta() const { return delta_; }
  double epsilon() const { return epsilon_; }
  int r() const { return r_; }
  double c() const { return c_; }
  double d() const { return d_; }

  // Domain S = [c, d - r(eps+delta)] and image [c + delta, d - r*eps].
  double domain_lo() const { return c_; }
  double domain_hi() const { return d_ - r_ * (epsilon_ + delta_); }
  double image_lo() const { return c_ + delta_; }
  double image_hi() const { return d_ - r_ * epsilon_; }

  bool in_S(double a) const { return a >= domain_lo() && a <= domain_hi(); }
  bool in_image(double a) const { return a >= image_lo() && a <= image_hi(); }

  double apply(double a) const {
    if (!in_S(a))
      throw std::domain_error("policy.apply: a = " + std::to_string(a) +
                              " outside domain [" + std::to_string(domain_lo()) + ", " +
                              std::to_string(domain_hi()) + "]");
    if (a <= d_ - epsilon_ - delta_) return a + delta_;
    return a + delta_ / (delta_ + epsilon_) * (d_ - a);
  }

  // Taper weight V(a); 0 outside the image.
  double taper_weight(double a) const {
    if (!in_image(a)) return 0.0;
    if (a <= d_ - epsilon_) return 1.0;
    return (d_ - a) / epsilon_;
  }

  double inverse(double a_prime) const {
    if (!in_image(a_prime))
      throw std::domain_error("policy.inverse: a' = " + std::to_string(a_prime) +
                              " outside image [" + std::to_string(image_lo()) + ", " +
                              std::to_string(image_hi()) + "]");
    return a_prime - delta_ * taper_weight(a_prime);
  }

  // d/da of the inverse map. At the kink a = d - eps the left-limit value 1
  // is returned.
  double inverse_derivative(double a_prime) const {
    if (!in_image(a_prime)) return 0.0;
    if (a_prime <= d_ - epsilon_) return 1.0;
    return 1.0 + delta_ / epsilon_;
  }

  bool is_identity() const { return delta_ == 0.0; }

 private:
  double delta_;
  double epsilon_;
  int r_;
  double c_;
  double d_;
};

}  // namespace pmtp
