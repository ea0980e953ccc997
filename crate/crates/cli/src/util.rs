//! Small file and threading helpers.

use std::fs;
use std::path::Path;

use crate::{CliError, CliResult};

/// Write atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Run `work` over the items of `inputs` with up to `jobs` threads,
/// preserving input order in the output.
pub fn parallel_map<I, O, F>(inputs: Vec<I>, jobs: usize, work: F) -> CliResult<Vec<O>>
where
    I: Send,
    O: Send,
    F: Fn(I) -> CliResult<O> + Sync,
{
    let jobs = jobs.max(1);
    if jobs == 1 || inputs.len() <= 1 {
        return inputs.into_iter().map(&work).collect();
    }
    let chunk_size = inputs.len().div_ceil(jobs);
    let chunks: Vec<Vec<I>> = {
        let mut chunks = Vec::new();
        let mut rest = inputs;
        while rest.len() > chunk_size {
            let tail = rest.split_off(chunk_size);
            chunks.push(rest);
            rest = tail;
        }
        chunks.push(rest);
        chunks
    };
    let results: Vec<CliResult<Vec<O>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|chunk| scope.spawn(|| chunk.into_iter().map(&work).collect::<CliResult<Vec<O>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(CliError::Internal("worker panicked".into())))
            })
            .collect()
    });
    let mut out = Vec::new();
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}
