//! Peak heap use of a forward pass, measured with a counting allocator.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ndarray::Array2;
use nwos::{Architecture, Network};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Counting;

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = CURRENT.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        CURRENT.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

// The counters are process-wide; measurements must not overlap.
const GEMM_WORKSPACE: usize = 1 << 20;

static SERIAL: Mutex<()> = Mutex::new(());

fn peak_forward_bytes(width: usize, depth: usize, m: usize) -> usize {
    let _guard = SERIAL.lock().unwrap();
    let net = Network::new(Architecture::new(10, width, depth).unwrap(), &mut ChaCha8Rng::seed_from_u64(1));
    let x = Array2::from_elem((m, 10), 0.3);
    let base = CURRENT.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    let out = net.forward(x.view()).unwrap();
    let peak = PEAK.load(Ordering::SeqCst) - base;
    drop(out);
    peak
}

#[test]
fn forward_activations_are_linear_in_batch_times_width() {
    let (w, m) = (128, 2048);
    let peak = peak_forward_bytes(w, 6, m);
    let activation = m * w * std::mem::size_of::<f64>();
    // Current hidden state, one pre-activation, the output column and the
    // matrix-multiply packing workspace, which does not depend on the batch.
    assert!(peak <= 2 * activation + 2 * m * 8 + GEMM_WORKSPACE, "peak {peak} B vs activation {activation} B");
}

#[test]
fn forward_memory_does_not_grow_with_depth() {
    let shallow = peak_forward_bytes(64, 3, 1024);
    let deep = peak_forward_bytes(64, 12, 1024);
    assert!(deep <= shallow + GEMM_WORKSPACE / 4, "depth 3: {shallow} B, depth 12: {deep} B");
}
