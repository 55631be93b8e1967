use std::io::{self, Write};

use clipse_core::RankedResult;

const BOLD: &str = "\x1b[1m";
const DIM: &str = "\x1b[2m";
const CYAN: &str = "\x1b[36m";
const GREEN: &str = "\x1b[32m";
const RESET: &str = "\x1b[0m";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Plain,
    Pretty,
}

/// One `rank<TAB>score<TAB>path` line per result, score to six decimals.
pub fn write_plain(out: &mut impl Write, results: &[RankedResult]) -> io::Result<()> {
    for r in results {
        writeln!(out, "{}\t{:.6}\t{}", r.rank, r.score, r.path)?;
    }
    Ok(())
}

/// A colored table with rank, score and path columns.
pub fn write_pretty(out: &mut impl Write, query: &str, results: &[RankedResult]) -> io::Result<()> {
    writeln!(out, "{BOLD}query:{RESET} {CYAN}{query}{RESET}")?;
    let rank_w = results
        .last()
        .map(|r| r.rank.to_string().len())
        .unwrap_or(1)
        .max(4);
    writeln!(out, "{DIM}{:>rank_w$}  {:>9}  path{RESET}", "rank", "score")?;
    for r in results {
        writeln!(
            out,
            "{BOLD}{:>rank_w$}{RESET}  {GREEN}{:>9.4}{RESET}  {}",
            r.rank, r.score, r.path
        )?;
    }
    if results.is_empty() {
        writeln!(out, "{DIM}no results{RESET}")?;
    }
    Ok(())
}

pub fn write_results(
    out: &mut impl Write,
    style: Style,
    query: &str,
    results: &[RankedResult],
) -> io::Result<()> {
    match style {
        Style::Plain => write_plain(out, results),
        Style::Pretty => write_pretty(out, query, results),
    }
}
