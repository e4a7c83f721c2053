#include "nfer/params.hpp"

namespace nfer {

const char* param_kind_name(ParamKind k) {
  switch (k) {
    case ParamKind::Weight:
      return "weight";
    case ParamKind::Bias:
      return "bias";
    case ParamKind::Norm:
      return "norm";
    case ParamKind::Householder:
      return "householder";
    case ParamKind::Embedding:
      return "embedding";
  }
  return "unknown";
}

bool decays(ParamKind k) { return k == ParamKind::Weight; }

namespace ad {

Var Binder::operator()(const Mat& p) {
  auto it = ids_.find(&p);
  if (it != ids_.end()) return Var{&tape_, it->second};
  Var v = track_ ? tape_.leaf(p) : tape_.constant(p);
  ids_.emplace(&p, v.id);
  return v;
}

Mat Binder::gradient(const Mat& p) {
  auto it = ids_.find(&p);
  if (it == ids_.end() || !tape_.requires_grad(it->second)) return Mat(p.rows(), p.cols());
  return tape_.grad(it->second);
}

}  // namespace ad

}  // namespace nfer
