#include "efgan/errors.hpp"

namespace efgan {

void throw_shape(const std::string& context, const std::string& detail) {
  throw ShapeError(context + ": " + detail);
}

}  // namespace efgan
