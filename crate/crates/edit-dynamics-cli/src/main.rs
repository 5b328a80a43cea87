//! Command-line pipeline: ingest revision histories, analyze them into
//! figure-ready tables, fit the group-size law, and simulate it.
//!
//! Exit codes: 0 success, 1 usage, 2 partial failure, 3 total failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use edit_dynamics::contention::{
    contention_curve, count_contention, detect_reverts, ContentionPeak, RevertEvent,
};
use edit_dynamics::episodes::{
    duration_vs_n, mean_group_size_vs_length, segment_episodes, Episode, GapPolicy,
};
use edit_dynamics::ingest::{
    parse_history_with_meta, write_fixture_csv, ApiClient, BotPolicy, ClientConfig, HistoryFormat,
    PageHistory,
};
use edit_dynamics::model::{self, GroupSpectrum};
use edit_dynamics::montecarlo::{simulate, sweep_beta, SimConfig};
use edit_dynamics::ngram::ngram_spectrum;
use edit_dynamics::report;
use edit_dynamics::{ModelParams, Real};

#[derive(Parser)]
#[command(name = "edit-dynamics", version, about = "Editing-group statistics and group-size model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BotMode {
    Include,
    Exclude,
    Both,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// File with one page title per line (fetched from the API).
    #[arg(long)]
    titles: Option<PathBuf>,
    /// Directory of fixture CSV histories (offline input).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Forbid network access; cached/fixture data only.
    #[arg(long)]
    offline: bool,
}

#[derive(Args, Clone)]
struct AnalyzeArgs {
    /// Absolute gap threshold in days; used as the adaptive floor too.
    #[arg(long, default_value_t = 2.0)]
    gap_days: f64,
    /// Adaptive multiplier on the page's median inter-arrival gap;
    /// 0 selects a pure absolute threshold.
    #[arg(long, default_value_t = 10.0)]
    gap_multiplier: f64,
    /// Bot handling for group sizes and spectra.
    #[arg(long, value_enum, default_value_t = BotMode::Both)]
    bots: BotMode,
    /// Gram length for the comment-text spectrum.
    #[arg(long, default_value_t = 3)]
    ngram_n: usize,
    /// Article-length bins for the group-size-vs-length table.
    #[arg(long, default_value_t = 10)]
    bins: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch or normalize page histories into canonical per-page files.
    Ingest {
        #[command(flatten)]
        input: InputArgs,
        /// Maximum revisions per page.
        #[arg(long, default_value_t = 5000)]
        page_limit: usize,
        /// Bot allow/deny list file (+name human, -name bot).
        #[arg(long)]
        bot_list: Option<PathBuf>,
    },
    /// Segment episodes, detect reverts, and emit all figure tables.
    Analyze {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        analyze: AnalyzeArgs,
    },
    /// Fit the group-size law to an emitted spectrum.
    Fit {
        /// Output directory holding fig4_spectrum.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Group-scale anchor for the fit (contention peak).
        #[arg(long, default_value_t = 8.0)]
        nbar: f64,
        /// Fit the bots-excluded spectrum instead of the full one.
        #[arg(long)]
        exclude_bots: bool,
    },
    /// Run the detailed-balance simulator.
    Simulate {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = 8.0)]
        nbar: f64,
        #[arg(long, default_value_t = 100_000)]
        episodes: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Optional beta sweep "low,high,step".
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Analyze + fit + simulate, then print paper targets beside measured
    /// values.
    Report {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        analyze: AnalyzeArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100_000)]
        episodes: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are success paths
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match run(cli) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            if msg.starts_with("usage:") {
                1
            } else {
                3
            }
        }
    };
    ExitCode::from(code)
}

fn run(cli: Cli) -> Result<u8, String> {
    match cli.command {
        Command::Ingest { input, page_limit, bot_list } => cmd_ingest(&input, page_limit, bot_list.as_deref()),
        Command::Analyze { input, analyze } => cmd_analyze(&input, &analyze).map(|_| 0),
        Command::Fit { out, nbar, exclude_bots } => cmd_fit(&out, nbar, exclude_bots),
        Command::Simulate { out, beta, nbar, episodes, seed, sweep } => {
            cmd_simulate(&out, beta, nbar, episodes, seed, sweep.as_deref())
        }
        Command::Report { input, analyze, seed, episodes } => {
            cmd_report(&input, &analyze, seed, episodes)
        }
    }
}

// ------------------------------------------------------------------ ingest

fn cmd_ingest(input: &InputArgs, page_limit: usize, bot_list: Option<&Path>) -> Result<u8, String> {
    let policy = match bot_list {
        Some(p) => BotPolicy::from_file(p).map_err(|e| e.to_string())?,
        None => BotPolicy::default(),
    };
    let histories_dir = input.out.join("histories");
    fs::create_dir_all(&histories_dir).map_err(|e| e.to_string())?;

    let histories: Vec<(String, Result<PageHistory, String>)> = match (&input.titles, &input.fixtures) {
        (Some(_), Some(_)) => return Err("usage: exactly one of --titles/--fixtures".into()),
        (None, None) => return Err("usage: no input (need --titles or --fixtures)".into()),
        (Some(titles_path), None) => {
            let text = fs::read_to_string(titles_path).map_err(|e| e.to_string())?;
            let titles: Vec<&str> =
                text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            if titles.is_empty() {
                return Err("usage: no input (titles file is empty)".into());
            }
            let config = ClientConfig {
                cache_dir: Some(input.out.join("cache")),
                offline: input.offline,
                ..ClientConfig::default()
            };
            let client = ApiClient::with_http(config, policy.clone());
            titles
                .into_iter()
                .map(|t| {
                    (t.to_string(), client.fetch_history(t, page_limit).map_err(|e| e.to_string()))
                })
                .collect()
        }
        (None, Some(dir)) => load_fixture_dir(dir, &policy)?
            .into_iter()
            .map(|h| (h.title.clone(), Ok(h)))
            .collect(),
    };

    let mut index = String::from("page_id,title,revisions,users,article_length\n");
    let mut ok = 0usize;
    let mut failed = 0usize;
    for (title, result) in &histories {
        match result {
            Ok(h) => {
                let users: std::collections::HashSet<&str> =
                    h.revisions.iter().map(|r| r.user_key.as_str()).collect();
                let path = histories_dir.join(format!("page_{:08}.csv", h.page_id));
                let file = fs::File::create(&path).map_err(|e| e.to_string())?;
                write_fixture_csv(h, file).map_err(|e| e.to_string())?;
                index.push_str(&format!(
                    "{},{},{},{},{}\n",
                    h.page_id,
                    h.title,
                    h.len(),
                    users.len(),
                    h.article_length
                ));
                println!(
                    "ingested {title}: {} revisions, {} users, {} bytes",
                    h.len(),
                    users.len(),
                    h.article_length
                );
                ok += 1;
            }
            Err(e) => {
                eprintln!("failed {title}: {e}");
                failed += 1;
            }
        }
    }
    fs::write(input.out.join("pages.csv"), index).map_err(|e| e.to_string())?;
    println!("ingest complete: {ok} pages ok, {failed} failed");
    Ok(if ok == 0 {
        3
    } else if failed > 0 {
        2
    } else {
        0
    })
}

/// Load all fixture CSVs in a directory, ids assigned in sorted filename
/// order so runs are deterministic.
fn load_fixture_dir(dir: &Path, policy: &BotPolicy) -> Result<Vec<PageHistory>, String> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for (i, path) in files.iter().enumerate() {
        let raw = fs::read(path).map_err(|e| e.to_string())?;
        let title = path.file_stem().unwrap().to_string_lossy().to_string();
        let h = parse_history_with_meta(
            &raw,
            HistoryFormat::FixtureCsv,
            policy,
            i as u64 + 1,
            &title,
        )
        .map_err(|e| format!("{}: {e}", path.display()))?;
        out.push(h);
    }
    Ok(out)
}

// ----------------------------------------------------------------- analyze

struct AnalysisOutput {
    episodes_incl: Vec<Episode>,
    spectrum_incl: GroupSpectrum,
    spectrum_excl: GroupSpectrum,
    peak_incl: ContentionPeak,
    bot_fraction: f64,
}

fn gap_policy(args: &AnalyzeArgs) -> GapPolicy {
    let floor = (args.gap_days * 86_400.0) as i64;
    if args.gap_multiplier > 1.0 {
        GapPolicy::adaptive(args.gap_multiplier, floor.max(1))
    } else {
        GapPolicy::absolute(floor.max(1))
    }
}

fn load_corpus(input: &InputArgs) -> Result<Vec<PageHistory>, String> {
    let policy = BotPolicy::default();
    if let Some(dir) = &input.fixtures {
        return load_fixture_dir(dir, &policy);
    }
    let dir = input.out.join("histories");
    if !dir.is_dir() {
        return Err(format!(
            "no canonical histories at {} (run `ingest` first or pass --fixtures)",
            dir.display()
        ));
    }
    load_fixture_dir(&dir, &policy)
}

fn cmd_analyze(input: &InputArgs, args: &AnalyzeArgs) -> Result<AnalysisOutput, String> {
    let corpus = load_corpus(input)?;
    if corpus.is_empty() {
        return Err("usage: no input (no history files found)".into());
    }
    fs::create_dir_all(&input.out).map_err(|e| e.to_string())?;
    let policy = gap_policy(args);

    let mut per_page: Vec<(PageHistory, Vec<Episode>, Vec<RevertEvent>)> = Vec::new();
    for history in corpus {
        let mut episodes = segment_episodes(&history, &policy);
        let events = detect_reverts(&history);
        for e in &mut episodes {
            count_contention(e, &events, &history);
        }
        per_page.push((history, episodes, events));
    }

    let all_episodes: Vec<Episode> =
        per_page.iter().flat_map(|(_, eps, _)| eps.iter().cloned()).collect();
    if all_episodes.is_empty() {
        println!("notice: no episodes found; nothing to emit");
        return Ok(AnalysisOutput {
            episodes_incl: vec![],
            spectrum_incl: GroupSpectrum::new(),
            spectrum_excl: GroupSpectrum::new(),
            peak_incl: ContentionPeak::NoPeak,
            bot_fraction: 0.0,
        });
    }
    let all_events: Vec<RevertEvent> =
        per_page.iter().flat_map(|(_, _, ev)| ev.iter().cloned()).collect();

    write_out(&input.out, "episodes.csv", |w| report::write_episodes_csv(&all_episodes, w))?;
    write_out(&input.out, "reverts.csv", |w| report::write_reverts_csv(&all_events, w))?;

    let variants: &[(bool, &str)] = match args.bots {
        BotMode::Include => &[(true, "")],
        BotMode::Exclude => &[(false, "")],
        BotMode::Both => &[(true, ""), (false, "_nobots")],
    };
    let mut spectrum_incl = GroupSpectrum::new();
    let mut spectrum_excl = GroupSpectrum::new();
    let mut peak_incl = ContentionPeak::NoPeak;
    for &(include_bots, suffix) in variants {
        let corpus_ref: Vec<(&PageHistory, &[Episode])> =
            per_page.iter().map(|(h, eps, _)| (h, eps.as_slice())).collect();
        let fig1 = mean_group_size_vs_length(&corpus_ref, args.bins, include_bots);
        let fig2 = duration_vs_n(&all_episodes, include_bots);
        let fig3 = contention_curve(&all_episodes, include_bots);
        let mut spectrum = GroupSpectrum::new();
        for e in &all_episodes {
            let n = if include_bots { e.n_users } else { e.n_users_human };
            if n > 0 {
                spectrum.add(n, 1);
            }
        }
        write_out(&input.out, &format!("fig1_length_vs_n{suffix}.csv"), |w| {
            report::write_fig1(&fig1, w)
        })?;
        write_out(&input.out, &format!("fig2_duration_vs_n{suffix}.csv"), |w| {
            report::write_fig2(&fig2, w)
        })?;
        write_out(&input.out, &format!("fig3_contention_curve{suffix}.csv"), |w| {
            report::write_fig3(&fig3, w)
        })?;
        write_out(&input.out, &format!("fig4_spectrum{suffix}.csv"), |w| {
            report::write_fig4(&spectrum, w)
        })?;
        if include_bots {
            spectrum_incl = spectrum;
            peak_incl = fig3.peak;
        } else {
            spectrum_excl = spectrum;
        }
    }
    if matches!(args.bots, BotMode::Exclude) {
        spectrum_excl = spectrum_incl.clone();
    }

    // language-independent spectrum over the only text the metadata carries
    let comments: String = per_page
        .iter()
        .flat_map(|(h, _, _)| h.revisions.iter().map(|r| r.comment.as_str()))
        .collect::<Vec<_>>()
        .join(" ");
    let grams = ngram_spectrum(&comments, args.ngram_n);
    write_out(&input.out, "ngram_spectrum.csv", |w| report::write_ngram_csv(&grams, w))?;

    let total_revs: usize = per_page.iter().map(|(h, _, _)| h.len()).sum();
    let bot_revs: usize = per_page
        .iter()
        .map(|(h, _, _)| h.revisions.iter().filter(|r| r.is_bot).count())
        .sum();
    let bot_fraction = bot_revs as f64 / total_revs.max(1) as f64;

    println!("pages: {}", per_page.len());
    println!("episodes: {}", all_episodes.len());
    println!("revert events: {}", all_events.len());
    println!("bot edit fraction: {:.3}", bot_fraction);
    match spectrum_incl.mode() {
        Some(m) => println!("spectrum mode N: {m}"),
        None => println!("spectrum mode N: n/a"),
    }
    match peak_incl {
        ContentionPeak::Found { argmax_n, weighted_n } => {
            println!("contention peak N: argmax {argmax_n}, weighted {weighted_n:.2}")
        }
        ContentionPeak::NoPeak => println!("contention peak N: none"),
    }
    if spectrum_incl.counts().filter(|&(n, _)| n >= 2).count() < 2 {
        println!("notice: spectrum lacks group mass at N >= 2; fit will be skipped");
    }

    Ok(AnalysisOutput {
        episodes_incl: all_episodes,
        spectrum_incl,
        spectrum_excl,
        peak_incl,
        bot_fraction,
    })
}

fn write_out<F>(dir: &Path, name: &str, f: F) -> Result<(), String>
where
    F: FnOnce(&mut dyn std::io::Write) -> std::io::Result<()>,
{
    let path = dir.join(name);
    let mut file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    f(&mut file).map_err(|e| format!("{}: {e}", path.display()))
}

// --------------------------------------------------------------------- fit

fn read_spectrum_csv(path: &Path) -> Result<GroupSpectrum, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut spectrum = GroupSpectrum::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("n,") || line.starts_with("N,") {
            continue;
        }
        let mut parts = line.split(',');
        let n: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("bad spectrum row: {line}"))?;
        let count: u64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("bad spectrum row: {line}"))?;
        spectrum.add(n, count);
    }
    Ok(spectrum)
}

fn run_fit(
    spectrum: &GroupSpectrum,
    nbar_anchor: f64,
    out: &Path,
    suffix: &str,
) -> Result<ModelParams, String> {
    let (params, fit_report) =
        model::fit_with_scale::<Real>(spectrum, nbar_anchor).map_err(|e| e.to_string())?;
    let pmf = model::pmf(&params, params.default_n_max()).map_err(|e| e.to_string())?;
    write_out(out, &format!("fit_report{suffix}.txt"), |w| {
        report::write_fit_report(&params, &fit_report, w)
    })?;
    write_out(out, &format!("fit_overlay{suffix}.csv"), |w| {
        report::write_overlay_csv(spectrum, &pmf, w)
    })?;
    println!(
        "fit{}: beta={:.4} n_bar={:.2} chi2={:.2} (dof {}) p={:.3}{}",
        suffix,
        params.beta,
        params.n_bar,
        fit_report.chi_square,
        fit_report.chi_square_dof,
        fit_report.p_value,
        if fit_report.low_confidence { " [low confidence]" } else { "" }
    );
    Ok(params)
}

fn cmd_fit(out: &Path, nbar: f64, exclude_bots: bool) -> Result<u8, String> {
    let name = if exclude_bots { "fig4_spectrum_nobots.csv" } else { "fig4_spectrum.csv" };
    let path = out.join(name);
    if !path.is_file() {
        return Err(format!("spectrum file missing: {} (run `analyze` first)", path.display()));
    }
    let spectrum = read_spectrum_csv(&path)?;
    let suffix = if exclude_bots { "_nobots" } else { "" };
    run_fit(&spectrum, nbar, out, suffix)?;
    Ok(0)
}

// ---------------------------------------------------------------- simulate

fn cmd_simulate(
    out: &Path,
    beta: f64,
    nbar: f64,
    episodes: u64,
    seed: u64,
    sweep: Option<&str>,
) -> Result<u8, String> {
    fs::create_dir_all(out).map_err(|e| e.to_string())?;
    let params = ModelParams::new(beta, nbar).map_err(|e| e.to_string())?;
    let cfg = SimConfig::new(params, episodes, seed);
    let result = simulate(&cfg).map_err(|e| e.to_string())?;
    let target = model::pmf(&params, params.default_n_max()).map_err(|e| e.to_string())?;
    let tv = result.empirical.tv_distance(&target);
    write_out(out, "sim_spectrum.csv", |w| report::write_sim_csv(&result.empirical, w))?;
    write_out(out, "sim_report.txt", |w| {
        writeln!(w, "{}", report::SCHEMA_HEADER)?;
        writeln!(w, "beta={beta:.6}")?;
        writeln!(w, "n_bar={nbar:.6}")?;
        writeln!(w, "episodes={episodes}")?;
        writeln!(w, "seed={seed}")?;
        writeln!(w, "transitions={}", result.transitions)?;
        writeln!(w, "tv_distance={tv:.6}")
    })?;
    println!("simulated {episodes} episodes: TV distance to target pmf {tv:.4}");

    if let Some(spec) = sweep {
        let parts: Vec<f64> = spec.split(',').filter_map(|v| v.parse().ok()).collect();
        if parts.len() != 3 {
            return Err("usage: --sweep expects low,high,step".into());
        }
        let rows =
            sweep_beta(parts[0], parts[1], parts[2], &cfg).map_err(|e| e.to_string())?;
        write_out(out, "sweep_beta.csv", |w| report::write_sweep_csv(&rows, w))?;
        println!("sweep: {} rows written", rows.len());
    }
    Ok(0)
}

// ------------------------------------------------------------------ report

fn cmd_report(
    input: &InputArgs,
    args: &AnalyzeArgs,
    seed: u64,
    episodes: u64,
) -> Result<u8, String> {
    let analysis = cmd_analyze(input, args)?;
    let groupable = analysis.spectrum_incl.counts().filter(|&(n, _)| n >= 2).count();

    // anchor the fit at the measured contention peak when there is one
    let anchor = match analysis.peak_incl {
        ContentionPeak::Found { weighted_n, .. } if weighted_n > 1.0 => weighted_n,
        _ => model::DEFAULT_N_BAR_ANCHOR,
    };
    let fitted = if groupable >= 2 {
        Some(run_fit(&analysis.spectrum_incl, anchor, &input.out, "")?)
    } else {
        println!("notice: fit skipped (spectrum underdetermined)");
        None
    };
    let fitted_nobots = if analysis.spectrum_excl.counts().filter(|&(n, _)| n >= 2).count() >= 2 {
        run_fit(&analysis.spectrum_excl, anchor, &input.out, "_nobots").ok()
    } else {
        None
    };

    if let Some(p) = &fitted {
        let _ = cmd_simulate(&input.out, p.beta, p.n_bar, episodes, seed, None)?;
    }

    let peak = match analysis.peak_incl {
        ContentionPeak::Found { weighted_n, .. } => Some(weighted_n),
        ContentionPeak::NoPeak => None,
    };
    println!();
    println!(
        "{}",
        report::paper_comparison(
            peak,
            analysis.spectrum_incl.mode(),
            analysis.bot_fraction,
            fitted_nobots.as_ref().or(fitted.as_ref()).map(|p| p.beta),
        )
    );
    println!("reported values are corpus-scale; to attempt a reproduction:");
    println!("  edit-dynamics ingest --titles topics.txt --out run/ --page-limit 5000");
    println!("  edit-dynamics report --out run/ --bots both --seed 1");
    println!("(hundreds of titles are needed for stable statistics)");
    let _ = analysis.episodes_incl;
    Ok(0)
}
