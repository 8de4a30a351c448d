#pragma once

#include "tgeat/types.hpp"

#include <string>

namespace tgeat::nn {

// Parameter groups; the trainable set of a training stage is a union of groups.
enum class Group { conv, transformer, head, text_projection, env_classifier, provider };

std::string to_string(Group group);

template <typename Scalar>
struct Param {
  std::string name;
  Group group = Group::transformer;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Param() = default;
  Param(std::string name_, Group group_, Matrix<Scalar> value_)
      : name(std::move(name_)), group(group_), value(std::move(value_)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  Eigen::Index size() const { return value.size(); }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

}  // namespace tgeat::nn
