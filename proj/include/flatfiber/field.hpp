#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <utility>

namespace flatfiber {

/// Coefficient vector tagged with the coordinate system it lives in.
///
/// The tag keeps nodal coefficients (domain side, u = sum u_j psi_j) apart from
/// dual-functional coordinates (range side, g_i = <psi_i, g>), which differ by
/// a mass-matrix change of coordinates and must never be mixed silently.
template <class Tag>
class Field {
 public:
  Field() = default;
  explicit Field(Eigen::Index n) : values_(Eigen::VectorXd::Zero(n)) {}
  explicit Field(Eigen::VectorXd values) : values_(std::move(values)) {}

  [[nodiscard]] Eigen::Index size() const { return values_.size(); }
  [[nodiscard]] const Eigen::VectorXd& vec() const { return values_; }
  [[nodiscard]] Eigen::VectorXd& vec() { return values_; }

  double operator[](Eigen::Index i) const { return values_[i]; }
  double& operator[](Eigen::Index i) { return values_[i]; }

  [[nodiscard]] bool all_finite() const { return values_.allFinite(); }

  Field& operator+=(const Field& other) {
    values_ += other.values_;
    return *this;
  }
  Field& operator-=(const Field& other) {
    values_ -= other.values_;
    return *this;
  }
  Field& operator*=(double s) {
    values_ *= s;
    return *this;
  }

  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator-(Field a) {
    a.values_ = -a.values_;
    return a;
  }
  friend Field operator*(double s, Field a) { return a *= s; }
  friend Field operator*(Field a, double s) { return a *= s; }

 private:
  Eigen::VectorXd values_;
};

struct NodalTag {};
struct DualTag {};
struct VertexTag {};

/// Coefficients of a P1 function in the interior nodal basis (length N).
using NodalField = Field<NodalTag>;
/// Dual coordinates g_i = <psi_i, g>_0 over interior basis functions (length N).
using DualField = Field<DualTag>;
/// Values at every mesh vertex, boundary included; used for P1 weights.
using VertexField = Field<VertexTag>;

}  // namespace flatfiber
