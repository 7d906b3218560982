//! Result files: CSV tables, two-column plot data and SVG line charts.
//!
//! `games.csv` holds one row per game with platoon means; the same columns
//! per agent go to `games-agents.csv`. Both are flushed after every game.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::engine::{AgentGameStats, Aggregate, GameStats};
use crate::error::Result;

pub const GAMES_HEADER: &str = "game,agent,n_sent,sr,prr,mean_reward,eps,mode0,mode1,mode2,mode3,dup_pct";
pub const COMPARE_HEADER: &str = "selector,congestion,mean_prr,std_prr,dup_pct,redundant_pct";

fn agent_row(game: usize, label: &str, a: &AgentGameStats) -> String {
    let m = a.mode_counts;
    format!(
        "{game},{label},{},{},{},{},{},{},{},{},{},{}",
        a.n_sent,
        a.sr,
        a.prr,
        a.mean_reward(),
        a.epsilon,
        m[0],
        m[1],
        m[2],
        m[3],
        a.dup_pct()
    )
}

/// Platoon-mean row. Counts are summed over agents, rates averaged.
pub fn mean_row(g: &GameStats) -> String {
    let m = g.mode_counts();
    format!(
        "{},mean,{},{},{},{},{},{},{},{},{},{}",
        g.game,
        g.mean_n_sent(),
        g.mean_sr(),
        g.mean_prr(),
        g.mean_reward(),
        g.mean_epsilon(),
        m[0],
        m[1],
        m[2],
        m[3],
        g.dup_pct()
    )
}

pub struct GamesWriter {
    games: BufWriter<File>,
    agents: BufWriter<File>,
}

impl GamesWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        let mut games = BufWriter::new(File::create(dir.join("games.csv"))?);
        let mut agents = BufWriter::new(File::create(dir.join("games-agents.csv"))?);
        writeln!(games, "{GAMES_HEADER}")?;
        writeln!(agents, "{GAMES_HEADER}")?;
        games.flush()?;
        agents.flush()?;
        Ok(Self { games, agents })
    }

    pub fn write(&mut self, g: &GameStats) -> Result<()> {
        writeln!(self.games, "{}", mean_row(g))?;
        for (k, a) in g.agents.iter().enumerate() {
            writeln!(self.agents, "{}", agent_row(g.game, &k.to_string(), a))?;
        }
        self.games.flush()?;
        self.agents.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub selector: String,
    pub congestion: String,
    pub aggregate: Aggregate,
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = format!("{COMPARE_HEADER}\n");
    for r in rows {
        let a = &r.aggregate;
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.selector,
            r.congestion,
            a.mean_prr,
            a.std_prr,
            a.dup_pct,
            a.redundant_pct()
        )
        .unwrap();
    }
    s
}

/// Whitespace-separated `x y` lines after a `#` header naming the columns.
pub fn plot_data(x_name: &str, y_name: &str, ys: &[f64]) -> String {
    let mut s = format!("# {x_name} {y_name}\n");
    for (i, y) in ys.iter().enumerate() {
        writeln!(s, "{} {y}", i + 1).unwrap();
    }
    s
}

/// Minimal line chart of `ys` against 1..=n.
pub fn svg_line_chart(title: &str, x_label: &str, y_label: &str, ys: &[f64]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    let finite: Vec<f64> = ys.iter().copied().filter(|y| y.is_finite()).collect();
    let (mut lo, mut hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &y| (l.min(y), h.max(y)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let n = ys.len().max(2) as f64;
    let sx = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (n - 1.0);
    let sy = |y: f64| H - PAD - (H - 2.0 * PAD) * (y - lo) / (hi - lo);
    let points: Vec<String> = ys
        .iter()
        .enumerate()
        .filter(|(_, y)| y.is_finite())
        .map(|(i, &y)| format!("{:.2},{:.2}", sx(i), sy(y)))
        .collect();

    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, escape(title)).unwrap();
    writeln!(
        s,
        r#"<polyline fill="none" stroke="black" points="{PAD},{PAD} {PAD},{} {},{}"/>"#,
        H - PAD,
        W - PAD,
        H - PAD
    )
    .unwrap();
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, W / 2.0, H - 12.0, escape(x_label)).unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    )
    .unwrap();
    for (y, label) in [(lo, lo), (hi, hi)] {
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="10">{label:.3}</text>"#, PAD - 4.0, sy(y) + 3.0).unwrap();
    }
    writeln!(s, r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points="{}"/>"#, points.join(" ")).unwrap();
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents)?;
    Ok(())
}
