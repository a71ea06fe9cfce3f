#pragma once

namespace phr::nn {

// Keeps large activation buffers on the heap between training steps instead
// of returning them to the OS after every step (glibc only; otherwise a
// no-op). Safe to call more than once.
void tune_allocator();

}  // namespace phr::nn
