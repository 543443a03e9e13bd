//! CSV rendering for PSR reports and the monitor log.

use std::fmt::Write as _;

use crate::netsim::{Delivery, PsrReport};

pub const CSV_HEADER: &str = "scenario,turbidity_ntu,hop_index,link_distance_m,packets_attempted,\
packets_delivered,per_hop_psr,cumulative_psr,mean_rx_lux";

/// Six significant digits, trailing zeros kept. Exponent form outside
/// `[1e-4, 1e6)`, with a signed two-digit exponent.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0.00000".to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        format!("{:.*}", (5 - exp) as usize, x)
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

pub fn write_csv(reports: &[PsrReport]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for report in reports {
        for hop in &report.hops {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                report.label,
                sig6(report.turbidity_ntu),
                hop.hop_index,
                sig6(hop.link_distance_m),
                hop.packets_attempted,
                hop.packets_delivered,
                sig6(hop.per_hop_psr),
                sig6(hop.cumulative_psr),
                sig6(hop.mean_rx_lux),
            )
            .expect("writing to a String");
        }
    }
    out
}

/// Plain-text table of the last hop's cumulative PSR per turbidity.
pub fn summary(reports: &[PsrReport]) -> String {
    let mut out = String::from("turbidity_ntu  hops  end_to_end_psr  delivered/rounds\n");
    for r in reports {
        let last = r.hops.last();
        writeln!(
            out,
            "{:>13}  {:>4}  {:>14}  {}/{}",
            sig6(r.turbidity_ntu),
            r.hops.len(),
            sig6(r.final_cumulative_psr()),
            last.map_or(0, |h| h.packets_delivered),
            r.rounds
        )
        .expect("writing to a String");
    }
    out
}

/// One line per delivered frame: `round,time_s,temp_0,...,temp_n` with
/// temperatures in hop order. No header.
pub fn monitor_log(deliveries: &[Delivery]) -> String {
    let mut out = String::new();
    for d in deliveries {
        write!(out, "{},{:.6}", d.round, d.at_s).expect("writing to a String");
        for r in d.frame.records() {
            write!(out, ",{}", r.temperature_c).expect("writing to a String");
        }
        out.push('\n');
    }
    out
}
