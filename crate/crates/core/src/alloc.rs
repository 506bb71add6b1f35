//! Allocator tuning for long training runs.
//!
//! Activations of a 1024-wide layer over a batch are tens of megabytes. glibc
//! serves such blocks with fresh `mmap` pages and returns them on free, so
//! every step pays page faults for each buffer. Keeping large blocks on the
//! heap lets later steps reuse already-mapped memory.

/// Keeps large allocations on the heap. Call once at program start; a no-op
/// outside glibc.
pub fn retain_large_allocations() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    // SAFETY: mallopt only adjusts allocator thresholds and is called before
    // other threads exist.
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, i32::MAX);
        libc::mallopt(libc::M_TRIM_THRESHOLD, i32::MAX);
    }
}
