//! Figure-ready tables and flat reports.
//!
//! Every file starts with the schema marker `# edit-dynamics v1` so golden
//! comparisons stay stable. Floats are fixed to six decimals.

use std::io::Write;

use crate::contention::{ContentionCurve, ContentionPeak, RevertEvent};
use crate::episodes::{DurationTable, Episode, LengthBin};
use crate::model::{FitReport, GroupSpectrum, ModelParams, Pmf};
use crate::montecarlo::SweepRow;
use crate::ngram::NgramSpectrum;
use crate::scalar::Scalar;

pub const SCHEMA_HEADER: &str = "# edit-dynamics v1";

/// Corpus-scale values reported by the source study, printed beside
/// measured values for comparison; never asserted.
pub struct PaperTargets {
    pub contention_peak_n: (f64, f64),
    pub spectrum_peak_n: u32,
    pub min_bot_fraction: f64,
    pub bot_excluded_beta: f64,
}

pub const PAPER_TARGETS: PaperTargets = PaperTargets {
    contention_peak_n: (7.75, 8.2),
    spectrum_peak_n: 4,
    min_bot_fraction: 0.20,
    bot_excluded_beta: 0.93,
};

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_episodes_csv<W: Write>(episodes: &[Episode], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(
        w,
        "page_id,start_ts,end_ts,n_users,n_users_human,duration_days,contention_count,work_chars"
    )?;
    for e in episodes {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            e.page_id,
            e.start_ts,
            e.end_ts,
            e.n_users,
            e.n_users_human,
            fmt(e.duration_days),
            e.contention_count,
            e.work_chars
        )?;
    }
    Ok(())
}

pub fn write_reverts_csv<W: Write>(events: &[RevertEvent], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(w, "page_id,reverting_rev,restored_rev,undone_revs,kind")?;
    for ev in events {
        writeln!(
            w,
            "{},{},{},{},{}",
            ev.page_id,
            ev.reverting_rev,
            ev.restored_rev.map(|r| r.to_string()).unwrap_or_default(),
            ev.undone_revs.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";"),
            ev.kind.as_str()
        )?;
    }
    Ok(())
}

/// Mean group size vs article length (log-spaced length bins).
pub fn write_fig1<W: Write>(bins: &[LengthBin], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(w, "length_lo,length_hi,episodes,mean_n,std_error")?;
    for b in bins {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt(b.length_lo),
            fmt(b.length_hi),
            b.count,
            b.mean_n.map(fmt).unwrap_or_default(),
            b.std_error.map(fmt).unwrap_or_default()
        )?;
    }
    Ok(())
}

/// Duration vs group size, raw and per-user, with the two log-duration
/// cluster centers as comment lines.
pub fn write_fig2<W: Write>(table: &DurationTable, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(w, "# cluster_center_low_days={}", fmt(table.cluster_centers_days.0))?;
    writeln!(w, "# cluster_center_high_days={}", fmt(table.cluster_centers_days.1))?;
    writeln!(w, "n,episodes,mean_duration_days,variance_days,mean_duration_per_user_days")?;
    for r in &table.rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.n,
            r.count,
            fmt(r.mean_duration_days),
            fmt(r.variance_days),
            fmt(r.mean_duration_per_user_days)
        )?;
    }
    Ok(())
}

/// Contention curve I(N) with both peak estimators as comment lines.
pub fn write_fig3<W: Write>(curve: &ContentionCurve, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    match curve.peak {
        ContentionPeak::NoPeak => writeln!(w, "# peak=none")?,
        ContentionPeak::Found { argmax_n, weighted_n } => {
            writeln!(w, "# peak_argmax_n={argmax_n}")?;
            writeln!(w, "# peak_weighted_n={}", fmt(weighted_n))?;
        }
    }
    writeln!(w, "n,episodes,mean_contention,std_error")?;
    for r in &curve.rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.n,
            r.episode_count,
            fmt(r.mean_contention),
            fmt(r.std_error)
        )?;
    }
    Ok(())
}

/// Normalized group-size frequency spectrum.
pub fn write_fig4<W: Write>(spectrum: &GroupSpectrum, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(w, "n,count,frequency")?;
    for (n, c) in spectrum.counts() {
        writeln!(w, "{},{},{}", n, c, fmt(spectrum.frequency(n)))?;
    }
    Ok(())
}

pub fn write_ngram_csv<W: Write>(spectrum: &NgramSpectrum, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(w, "gram,count,relative")?;
    for (gram, count) in &spectrum.counts {
        let escaped = if gram.contains(',') || gram.contains('"') {
            format!("\"{}\"", gram.replace('"', "\"\""))
        } else {
            gram.clone()
        };
        writeln!(w, "{},{},{}", escaped, count, fmt(spectrum.relative(gram)))?;
    }
    Ok(())
}

/// Flat key-value fit report.
pub fn write_fit_report<F: Scalar, W: Write>(
    params: &ModelParams<F>,
    report: &FitReport<F>,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    let f = |v: F| fmt(v.to_f64().unwrap_or(f64::NAN));
    writeln!(w, "beta={}", f(params.beta))?;
    writeln!(w, "n_bar={}", f(params.n_bar))?;
    writeln!(w, "z={}", f(params.z))?;
    writeln!(w, "log_likelihood={}", f(report.log_likelihood))?;
    writeln!(w, "chi_square={}", fmt(report.chi_square))?;
    writeln!(w, "chi_square_dof={}", report.chi_square_dof)?;
    writeln!(w, "p_value={}", fmt(report.p_value))?;
    writeln!(w, "beta_interval_low={}", f(report.beta_interval.0))?;
    writeln!(w, "beta_interval_high={}", f(report.beta_interval.1))?;
    writeln!(w, "n_bar_interval_low={}", f(report.n_bar_interval.0))?;
    writeln!(w, "n_bar_interval_high={}", f(report.n_bar_interval.1))?;
    writeln!(w, "low_confidence={}", report.low_confidence)?;
    writeln!(w, "solo_excluded={}", report.solo_excluded)?;
    writeln!(w, "continuous_mode={}", f(params.continuous_mode()))?;
    writeln!(w, "continuous_mean={}", f(params.continuous_mean()))?;
    writeln!(w, "fission_ratio={}", f(params.fission_ratio()))?;
    Ok(())
}

/// Observed vs fitted overlay for spectrum plots.
pub fn write_overlay_csv<F: Scalar, W: Write>(
    spectrum: &GroupSpectrum,
    pmf: &Pmf<F>,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(w, "n,observed_freq,fitted_pmf")?;
    let total = spectrum.group_total() as f64;
    let hi = spectrum
        .counts()
        .map(|(n, _)| n)
        .max()
        .unwrap_or(2)
        .max(pmf.argmax() * 3);
    for n in 2..=hi {
        let obs = if total > 0.0 { spectrum.count(n) as f64 / total } else { 0.0 };
        let fitted = pmf.prob(n).to_f64().unwrap_or(0.0);
        if obs == 0.0 && fitted < 1e-9 {
            continue;
        }
        writeln!(w, "{},{},{}", n, fmt(obs), fmt(fitted))?;
    }
    Ok(())
}

pub fn write_sim_csv<W: Write>(spectrum: &GroupSpectrum, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(w, "N,count,frequency")?;
    for (n, c) in spectrum.counts() {
        writeln!(w, "{},{},{}", n, c, fmt(spectrum.frequency(n)))?;
    }
    Ok(())
}

pub fn write_sweep_csv<F: Scalar, W: Write>(rows: &[SweepRow<F>], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SCHEMA_HEADER}")?;
    writeln!(w, "beta,mode,mean,ratio")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            fmt(r.beta.to_f64().unwrap_or(f64::NAN)),
            r.mode,
            fmt(r.mean),
            fmt(r.ratio)
        )?;
    }
    Ok(())
}

/// Paper-target vs measured comparison block for the `report` command.
pub fn paper_comparison(
    contention_peak: Option<f64>,
    spectrum_mode: Option<u32>,
    bot_fraction: f64,
    fitted_beta: Option<f64>,
) -> String {
    let t = &PAPER_TARGETS;
    let mut out = String::new();
    out.push_str("target                          reported        measured\n");
    out.push_str(&format!(
        "contention peak <N>             {:.2}-{:.2}       {}\n",
        t.contention_peak_n.0,
        t.contention_peak_n.1,
        contention_peak.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
    ));
    out.push_str(&format!(
        "spectrum peak N                 {}               {}\n",
        t.spectrum_peak_n,
        spectrum_mode.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())
    ));
    out.push_str(&format!(
        "bot edit fraction               >{:.0}%            {:.1}%\n",
        t.min_bot_fraction * 100.0,
        bot_fraction * 100.0
    ));
    out.push_str(&format!(
        "bot-excluded effective beta     {:.2}            {}\n",
        t.bot_excluded_beta,
        fitted_beta.map(|v| format!("{v:.2}")).unwrap_or_else(|| "n/a".into())
    ));
    out
}
