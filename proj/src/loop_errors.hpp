#pragma once

#include <cstddef>
#include <exception>
#include <limits>

namespace icl::detail {

// Exceptions must not escape an OpenMP region. Loop bodies run through run();
// the error from the lowest failing index is kept and rethrown afterwards, so
// the reported failure does not depend on the thread count.
class LoopErrors {
 public:
  template <class Body>
  void run(std::ptrdiff_t index, Body&& body) noexcept {
    try {
      body();
    } catch (...) {
#pragma omp critical(icl_loop_errors)
      {
        if (index < index_) {
          index_ = index;
          error_ = std::current_exception();
        }
      }
    }
  }

  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::ptrdiff_t index_ = std::numeric_limits<std::ptrdiff_t>::max();
  std::exception_ptr error_;
};

}  // namespace icl::detail
