#pragma once

namespace tsgcn {

/// Keeps freed tensor buffers inside the process heap instead of returning
/// them to the OS after every tape. Training allocates and frees the same
/// activation sizes thousands of times per epoch; with glibc's defaults each
/// buffer above 128 KiB is a fresh mmap, and page faults can cost as much as
/// the arithmetic. Call once at program start. No-op outside glibc.
void configure_allocator();

}  // namespace tsgcn
