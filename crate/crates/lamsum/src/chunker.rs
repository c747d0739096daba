//! Positional chunking of a level's unit list.
//!
//! A level of L units is cut into ceil(L/s) contiguous chunks; every chunk has
//! exactly s units except the last, which takes the remainder. Chunks slice by
//! position in the current level order; no re-sorting happens here.

use serde::Serialize;

/// One contiguous slice `[start, end)` of a level's unit list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Chunk {
    pub level: usize,
    /// Position of this chunk within its level's plan.
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Chunk {
    pub fn width(&self) -> usize {
        self.end - self.start
    }

    /// The slice of the level's unit list covered by this chunk.
    pub fn slice<'a, T>(&self, level_units: &'a [T]) -> &'a [T] {
        &level_units[self.start..self.end]
    }
}

/// The full partition of one level into chunks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    pub s: usize,
    pub chunks: Vec<Chunk>,
}

impl ChunkPlan {
    pub fn n_chunks(&self) -> usize {
        self.chunks.len()
    }
}

/// Partitions `input_length` positions into chunks of `s`.
///
/// Panics if `input_length` or `s` is zero; validate configuration upstream.
pub fn plan_chunks(input_length: usize, s: usize, level: usize) -> ChunkPlan {
    assert!(input_length >= 1, "input_length must be >= 1");
    assert!(s >= 1, "chunk size s must be >= 1");
    let n_chunks = input_length.div_ceil(s);
    let chunks = (0..n_chunks)
        .map(|i| Chunk {
            level,
            index: i,
            start: i * s,
            end: ((i + 1) * s).min(input_length),
        })
        .collect();
    ChunkPlan { s, chunks }
}
