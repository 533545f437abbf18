//! Peak heap use while streaming a 100k-line corpus stays far below the
//! file size.

use std::alloc::{GlobalAlloc, Layout, System};
use std::io::{BufWriter, Write};
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use rewritekit::corpusio::{read_records, RewriteRecord};
use rewritekit::stats::dataset_stats;

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::SeqCst) + layout.size();
            PEAK.fetch_max(now, Ordering::SeqCst);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::SeqCst);
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

const LINES: usize = 100_000;

/// Resets the peak to the current live size and returns that baseline.
fn reset_peak() -> usize {
    let live = LIVE.load(Ordering::SeqCst);
    PEAK.store(live, Ordering::SeqCst);
    live
}

#[test]
fn bounded_memory_over_100k_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    {
        let mut w = BufWriter::new(std::fs::File::create(&path).unwrap());
        for i in 0..LINES {
            writeln!(
                w,
                r#"{{"id":"r{i}","instruction":"Make it shorter.","source":"The committee met on day {i} and discussed the annual budget at length. Several members raised concerns.","target":"The committee discussed the budget on day {i}."}}"#
            )
            .unwrap();
        }
    }
    let file_size = std::fs::metadata(&path).unwrap().len() as usize;
    assert!(file_size > 10 << 20);
    // Spin up the global pool before measuring.
    let _: usize = (0..64usize).into_par_iter().sum();

    let base = reset_peak();
    let mut n = 0;
    for r in read_records::<RewriteRecord>(&path).unwrap() {
        r.unwrap();
        n += 1;
    }
    assert_eq!(n, LINES);
    let reader_peak = PEAK.load(Ordering::SeqCst) - base;
    assert!(reader_peak < 256 << 10, "reader peak {reader_peak} bytes");

    let base = reset_peak();
    let records = read_records::<RewriteRecord>(&path)
        .unwrap()
        .map(Result::unwrap);
    let stats = dataset_stats(records, None).unwrap();
    assert_eq!(stats.size, LINES);
    let stats_peak = PEAK.load(Ordering::SeqCst) - base;
    assert!(
        stats_peak < 4 << 20,
        "stats peak {stats_peak} bytes of a {file_size}-byte file"
    );
}
