//! Text artifacts: trajectory table and run report.

use std::fmt::Write as _;

use focsolve_core::Trajectory;

/// `v` in plain decimal notation with 12 significant digits (`0` for zero).
pub fn decimal12(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.11e}", v.abs());
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let body = if exp >= 11 {
        format!("{digits}{}", "0".repeat((exp - 11) as usize))
    } else if exp >= 0 {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    } else {
        format!("0.{}{digits}", "0".repeat((-exp - 1) as usize))
    };
    if v < 0.0 {
        format!("-{body}")
    } else {
        body
    }
}

/// Header `t,x,u,V_2..V_K`, one row per node, `u` blank on the last row.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.u.len();
    let k = traj.truncation();
    let mut out = String::from("t,x,u");
    for p in 2..=k {
        let _ = write!(out, ",V_{p}");
    }
    out.push('\n');
    for i in 0..=n {
        out += &decimal12(traj.grid.t(i));
        out.push(',');
        out += &decimal12(traj.x[i]);
        out.push(',');
        if i < n {
            out += &decimal12(traj.u[i]);
        }
        for series in &traj.v {
            out.push(',');
            out += &decimal12(series[i]);
        }
        out.push('\n');
    }
    out
}

/// Ordered `key = value` lines.
#[derive(Debug, Default)]
pub struct Report {
    lines: Vec<(String, String)>,
}

impl Report {
    pub fn put(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.put(key, format!("{value:e}"));
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
