//! Trajectory CSV: header `t,x1,...,xn,sigma`, 17 significant digits, LF
//! endings, 1-based `sigma`.

use std::fmt::Write as _;

use episwitch_core::simulate::Trajectory;

/// A trajectory read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// 1-based modes.
    pub sigma: Vec<usize>,
}

impl CsvTrajectory {
    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }
}

pub fn header(n: usize) -> String {
    let mut h = String::from("t");
    for i in 1..=n {
        let _ = write!(h, ",x{i}");
    }
    h.push_str(",sigma\n");
    h
}

pub fn write_trajectory(traj: &Trajectory<f64>) -> String {
    let n = traj.states.first().map_or(0, Vec::len);
    let mut out = header(n);
    for ((t, x), m) in traj.times.iter().zip(&traj.states).zip(&traj.modes) {
        let _ = write!(out, "{t:.16e}");
        for v in x {
            let _ = write!(out, ",{v:.16e}");
        }
        let _ = writeln!(out, ",{}", m + 1);
    }
    out
}

/// Parses a trajectory CSV; errors carry the 1-based line number.
pub fn parse_trajectory(text: &str) -> Result<CsvTrajectory, String> {
    let mut lines = text.split('\n').enumerate();
    let (_, head) = lines.next().ok_or("empty file")?;
    let cols: Vec<&str> = head.trim_end_matches('\r').split(',').collect();
    if cols.len() < 3 || cols[0] != "t" || cols[cols.len() - 1] != "sigma" {
        return Err(format!("line 1: header must be `t,x1,...,xn,sigma`, got `{head}`"));
    }
    let n = cols.len() - 2;
    for (i, c) in cols[1..=n].iter().enumerate() {
        if *c != format!("x{}", i + 1) {
            return Err(format!("line 1: column {} must be `x{}`, got `{c}`", i + 2, i + 1));
        }
    }
    let mut traj = CsvTrajectory { times: Vec::new(), states: Vec::new(), sigma: Vec::new() };
    for (k, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let lineno = k + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 2 {
            return Err(format!("line {lineno}: expected {} fields, found {}", n + 2, fields.len()));
        }
        let num = |s: &str, what: &str| -> Result<f64, String> {
            let v: f64 = s.trim().parse().map_err(|_| format!("line {lineno}: {what} `{s}` is not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("line {lineno}: {what} is not finite"))
            }
        };
        let t = num(fields[0], "t")?;
        if let Some(&prev) = traj.times.last() {
            if t < prev {
                return Err(format!("line {lineno}: time {t} decreases"));
            }
        }
        let x = fields[1..=n].iter().enumerate().map(|(i, s)| num(s, &format!("x{}", i + 1))).collect::<Result<Vec<_>, _>>()?;
        let sigma: usize = fields[n + 1]
            .trim()
            .parse()
            .ok()
            .filter(|&s| s >= 1)
            .ok_or_else(|| format!("line {lineno}: sigma `{}` must be a positive integer", fields[n + 1]))?;
        traj.times.push(t);
        traj.states.push(x);
        traj.sigma.push(sigma);
    }
    if traj.times.is_empty() {
        return Err("no data rows".into());
    }
    Ok(traj)
}
