#include "tgeat/nn/model.hpp"

namespace tgeat::nn {

template class SerModel<float>;
template class SerModel<double>;

}  // namespace tgeat::nn
