//! CSV and SVG writers. All numeric text is locale-free and deterministic.

use std::fmt::Write as _;

use cavity_gme::scenarios::ScanResult;
use cavity_gme::C64;

/// 17 significant digits; exact zeros (either sign) as `0.0`.
pub fn csv_float(x: f64) -> String {
    if x == 0.0 {
        "0.0".into()
    } else {
        format!("{x:.16e}")
    }
}

pub const COEFF_HEADER: &str = "m,n,re,im,abs";

#[derive(Debug, Clone, PartialEq)]
pub struct CoeffRow {
    pub m: i32,
    pub n: i32,
    pub value: C64,
    /// (oracle estimate, |closed − oracle|)
    pub oracle: Option<(f64, f64)>,
}

pub fn coeff_csv(rows: &[CoeffRow]) -> String {
    let with_oracle = rows.iter().any(|r| r.oracle.is_some());
    let mut s = String::from(COEFF_HEADER);
    if with_oracle {
        s.push_str(",oracle,diff");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{},{},{},{},{}", r.m, r.n, csv_float(r.value.re), csv_float(r.value.im), csv_float(r.value.norm()));
        if let Some((o, d)) = r.oracle {
            let _ = write!(s, ",{},{}", csv_float(o), csv_float(d));
        } else if with_oracle {
            s.push_str(",,");
        }
        s.push('\n');
    }
    s
}

pub fn scan_header(pairs: &[(i32, i32)]) -> String {
    let mut s = String::from("u");
    for (m, n) in pairs {
        let _ = write!(s, ",beta1_{m}_{n}");
    }
    s
}

pub fn scan_csv(scan: &ScanResult) -> String {
    let mut s = scan_header(&scan.pairs);
    s.push('\n');
    for (i, u) in scan.u.iter().enumerate() {
        s.push_str(&csv_float(*u));
        for v in &scan.values {
            s.push(',');
            s.push_str(&csv_float(v[i]));
        }
        s.push('\n');
    }
    s
}

const W: f64 = 720.0;
const H: f64 = 440.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of the scan with dashed markers at the predicted resonances.
pub fn scan_svg(scan: &ScanResult) -> String {
    let (u0, u1) = (0.0_f64.min(scan.u[0]), *scan.u.last().unwrap());
    let top = scan.values.iter().flatten().cloned().fold(0.0, f64::max);
    let top = if top > 0.0 { top * 1.05 } else { 1.0 };
    let x = |u: f64| PAD + (u - u0) / (u1 - u0).max(f64::MIN_POSITIVE) * (W - 2.0 * PAD);
    let y = |v: f64| H - PAD - v / top * (H - 2.0 * PAD);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2}" fill="none" stroke="black"/>"#,
        PAD,
        PAD,
        PAD,
        H - PAD,
        W - PAD,
        H - PAD
    );
    for k in 0..=4 {
        let u = u0 + (u1 - u0) * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{u:.3}</text>"#, x(u), H - PAD + 16.0);
        let v = top * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{v:.2e}</text>"#, PAD - 4.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">u</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="13" text-anchor="middle" transform="rotate(-90 14 {:.2})">|beta1| (N = {})</text>"#,
        H / 2.0,
        H / 2.0,
        scan.n_blocks
    );
    for (p, pair) in scan.pairs.iter().enumerate() {
        let c = COLORS[p % COLORS.len()];
        // inactive abscissae (single-block kernel zero) are drawn faint
        for r in &scan.predicted[p] {
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{c}" stroke-dasharray="4 4" stroke-width="0.8" opacity="{}"/>"#,
                x(r.u),
                PAD,
                x(r.u),
                H - PAD,
                if r.active { "1" } else { "0.3" }
            );
        }
        let mut d = String::new();
        for (i, (u, v)) in scan.u.iter().zip(&scan.values[p]).enumerate() {
            let _ = write!(d, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, x(*u), y(*v));
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{c}" stroke-width="1.2"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{c}">({}, {})</text>"#,
            W - PAD - 60.0,
            PAD + 16.0 * (p as f64 + 1.0),
            pair.0,
            pair.1
        );
    }
    s.push_str("</svg>\n");
    s
}
