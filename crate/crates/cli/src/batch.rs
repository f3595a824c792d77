//! Chunked, order-preserving parallel processing of JSON-lines input.

use std::io::{BufRead, Write};

use anyhow::Result;
use rayon::prelude::*;
use rayon::ThreadPool;

/// Lines handed to the workers at once.
pub const CHUNK: usize = 512;

pub fn thread_pool(workers: usize) -> Result<ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?)
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// A non-blank input line and its one-based line number.
pub struct Line {
    pub number: usize,
    pub text: String,
}

/// Maps every non-blank line through `f` on the pool and feeds the outputs to
/// `sink` in input order. Returns how many lines failed.
pub fn process_lines<R, O, F, S>(pool: &ThreadPool, reader: R, f: F, mut sink: S) -> Result<usize>
where
    R: BufRead,
    O: Send,
    F: Fn(&Line) -> std::result::Result<O, String> + Sync,
    S: FnMut(&Line, O) -> Result<()>,
{
    let mut failures = 0;
    let mut lines = reader.lines();
    let mut number = 0;
    loop {
        let mut chunk = Vec::with_capacity(CHUNK);
        for line in lines.by_ref() {
            number += 1;
            let text = line?;
            if text.trim().is_empty() {
                continue;
            }
            chunk.push(Line { number, text });
            if chunk.len() == CHUNK {
                break;
            }
        }
        if chunk.is_empty() {
            return Ok(failures);
        }
        let outputs: Vec<_> = pool.install(|| chunk.par_iter().map(&f).collect());
        for (line, out) in chunk.iter().zip(outputs) {
            match out {
                Ok(o) => sink(line, o)?,
                Err(message) => {
                    failures += 1;
                    eprintln!("line {}: {message}", line.number);
                }
            }
        }
    }
}

pub fn open_input(path: &std::path::Path) -> Result<Box<dyn BufRead>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(std::io::stdin().lock()));
    }
    let file = std::fs::File::open(path)
        .map_err(|e| anyhow::anyhow!("opening {}: {e}", path.display()))?;
    Ok(Box::new(std::io::BufReader::new(file)))
}

pub fn open_output(path: Option<&std::path::Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) if p.as_os_str() != "-" => {
            let file = std::fs::File::create(p)
                .map_err(|e| anyhow::anyhow!("creating {}: {e}", p.display()))?;
            Box::new(std::io::BufWriter::new(file))
        }
        _ => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_order_matches_input_across_chunks() {
        let input: String = (0..2000).map(|i| format!("{i}\n\n")).collect();
        let pool = thread_pool(4).unwrap();
        let mut seen = Vec::new();
        let failures = process_lines(
            &pool,
            input.as_bytes(),
            |l| {
                let v: u32 = l.text.parse().unwrap();
                if v % 500 == 7 {
                    Err("bad".into())
                } else {
                    Ok(v)
                }
            },
            |_, v| {
                seen.push(v);
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(failures, 4);
        let expected: Vec<u32> = (0..2000).filter(|v| v % 500 != 7).collect();
        assert_eq!(seen, expected);
    }
}
