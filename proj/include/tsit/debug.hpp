#pragma once

namespace tsit {

// Test hooks. conv2d_grad_fault deliberately corrupts conv2d weight
// gradients so the self-test harness can demonstrate that the gradient
// checker catches a real defect (and names the offending op).
struct DebugFlags {
    bool conv2d_grad_fault = false;
};

inline DebugFlags& debug_flags() {
    thread_local DebugFlags flags;
    return flags;
}

}  // namespace tsit
