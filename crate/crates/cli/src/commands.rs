use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use wegner::analysis::{
    binder_crossing, dualize_energy, extrapolate_infinite_size, quartic_peak_fit, Series,
};
use wegner::css::{css_distance_exact, css_distance_upper, CssPair};
use wegner::exact::{
    homological_difference, report as exact_report, verify_duality, verify_em_duality,
};
use wegner::gf2::BitVec;
use wegner::mc::{run_ensemble, Direction, McPoint, McSeries, Schedule};
use wegner::model::IsingModel;
use wegner::rng::SplitMix64;
use wegner::tiling::{
    five_five_quotient, parse_word, seed_search, square_torus, try_quotient, word_to_string,
    Tiling, FIVE_FIVE_150, FIVE_FIVE_80, FIVE_FIVE_900,
};

use crate::manifest::RunLog;
use crate::{
    AnalyzeArgs, AnalyzeCmd, BoundsCmd, CheckKind, CodeArgs, ExactArgs, McArgs, Quantity,
    TilingArgs,
};

fn out_path(dir: &Path, stem: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{stem}.{suffix}"))
}

fn finish(log: RunLog, dir: &Path, stem: &str) -> Result<()> {
    log.finish(&out_path(dir, stem, "manifest.json"))
}

fn load_tiling(log: &mut RunLog, path: &Path) -> Result<Tiling> {
    log.input(path);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading graph file {}", path.display()))?;
    let t: Tiling =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(t)
}

fn css_pair_of(t: &Tiling) -> Result<CssPair> {
    Ok(CssPair::new(t.g.clone(), t.h.clone())?)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn cmd_tiling(dir: &Path, args: &TilingArgs) -> Result<()> {
    let mut log = RunLog::new("tiling", args)?;
    let stem = args.out.clone();

    if args.search {
        log.seed(args.seed);
        let hits = seed_search(
            args.f,
            args.d,
            args.min_len..args.max_len + 1,
            args.attempts,
            args.seed,
            args.max_cosets,
            args.max_edges,
        );
        let rows: Vec<_> = hits
            .iter()
            .map(|(w, t)| {
                json!({
                    "relators": [word_to_string(w)],
                    "vertices": t.n_vertices,
                    "edges": t.n_edges,
                    "faces": t.n_faces,
                    "genus": t.genus,
                })
            })
            .collect();
        for row in &rows {
            println!(
                "hit {} : V={} E={} F={} genus={}",
                row["relators"][0].as_str().unwrap(),
                row["vertices"],
                row["edges"],
                row["faces"],
                row["genus"]
            );
        }
        println!("{} quotients found", rows.len());
        log.write_output(&out_path(dir, &stem, "search.json"), &json_bytes(&rows)?)?;
        return finish(log, dir, &stem);
    }

    let tiling = if let Some(l) = args.torus {
        square_torus(l)?
    } else if let Some(size) = args.pinned {
        let words = match size {
            80 => FIVE_FIVE_80,
            150 => FIVE_FIVE_150,
            900 => FIVE_FIVE_900,
            other => bail!("no pinned {{5,5}} quotient with {other} edges (have 80, 150, 900)"),
        };
        if (args.f, args.d) != (5, 5) {
            bail!("--pinned applies to --f 5 --d 5 only");
        }
        five_five_quotient(words, args.max_cosets)?
    } else {
        let extra = args
            .relator
            .iter()
            .map(|w| parse_word(w))
            .collect::<Result<Vec<_>, _>>()?;
        try_quotient(args.f, args.d, &extra, args.max_cosets)?
    };

    println!(
        "tiling: V={} E={} F={} genus={} (faces of order {}, vertices of order {})",
        tiling.n_vertices,
        tiling.n_edges,
        tiling.n_faces,
        tiling.genus,
        tiling.face_order,
        tiling.vertex_order
    );
    log.write_output(&out_path(dir, &stem, "tiling.json"), &json_bytes(&tiling)?)?;
    finish(log, dir, &stem)
}

pub fn cmd_code(dir: &Path, args: &CodeArgs) -> Result<()> {
    let mut log = RunLog::new("code", args)?;
    let tiling = load_tiling(&mut log, &args.graph)?;
    let pair = css_pair_of(&tiling)?;

    let (distance, method) = if args.exact {
        let d = css_distance_exact(&pair)?;
        (Some(d.d_g.min(d.d_h)), "exact".to_string())
    } else if pair.k() == 0 {
        (None, "none".to_string())
    } else {
        log.seed(args.seed);
        let est = css_distance_upper(&pair, args.trials, args.seed)?;
        (
            est.as_ref().map(|e| e.weight),
            format!("upper(trials={})", args.trials),
        )
    };

    println!("n r k R d method");
    println!(
        "{} {} {} {:.4} {} {}",
        pair.n(),
        pair.g().n_rows(),
        pair.k(),
        pair.rate(),
        distance.map_or_else(|| "-".to_string(), |d| d.to_string()),
        method
    );

    let header = pair.header(distance, &method);
    let stem = args.out.clone();
    log.write_output(&out_path(dir, &stem, "code.json"), &json_bytes(&header)?)?;
    finish(log, dir, &stem)
}

pub fn cmd_exact(dir: &Path, args: &ExactArgs) -> Result<()> {
    let mut log = RunLog::new("exact", args)?;
    let tiling = load_tiling(&mut log, &args.graph)?;
    let stem = args.out.clone();

    let result = match args.check {
        CheckKind::Duality => {
            let model = IsingModel::new(tiling.g.clone(), args.coupling, 0.0)?;
            let res = verify_duality(&model, args.cap)?;
            println!(
                "duality residual = {:.3e} (dual coupling {:.12})",
                res.residual, res.dual_coupling
            );
            serde_json::to_value(&res)?
        }
        CheckKind::EmDuality => {
            let n = tiling.g.n_cols();
            let defect = if args.defect_p > 0.0 {
                log.seed(args.defect_seed);
                let mut rng = SplitMix64::new(args.defect_seed);
                BitVec::random(n, args.defect_p, &mut rng)
            } else {
                BitVec::zeros(n)
            };
            let model = IsingModel::new(tiling.g.clone(), args.coupling, 0.0)?
                .with_disorder(defect.clone())?;
            let res = verify_em_duality(&model, args.cap)?;
            println!(
                "em-duality residual = {:.3e} (defect weight {})",
                res.residual,
                defect.weight()
            );
            serde_json::to_value(&res)?
        }
        CheckKind::DeltaF => {
            let pair = css_pair_of(&tiling)?;
            let zero = BitVec::zeros(pair.n());
            let df = homological_difference(&pair, args.coupling, &zero, args.cap)?;
            let ceiling = pair.rate() * std::f64::consts::LN_2;
            println!("delta_f = {df:.12} (clean ceiling R ln2 = {ceiling:.12})");
            json!({ "delta_f": df, "rate_ln2": ceiling, "coupling": args.coupling })
        }
        CheckKind::Report => {
            let model = IsingModel::new(tiling.g.clone(), args.coupling, args.field)?;
            let rep = exact_report(&model, args.cap)?;
            println!(
                "ln Z = {:.12}  f = {:.12}  (n = {}, r = {})",
                rep.ln_z, rep.f, rep.n_bonds, rep.n_spins
            );
            serde_json::to_value(&rep)?
        }
    };

    log.write_output(&out_path(dir, &stem, "exact.json"), &json_bytes(&result)?)?;
    finish(log, dir, &stem)
}

pub fn cmd_mc(dir: &Path, args: &McArgs) -> Result<()> {
    let mut log = RunLog::new("mc", args)?;
    let tiling = load_tiling(&mut log, &args.graph)?;
    let stem = args.out.clone();

    let mut model = IsingModel::new(tiling.g.clone(), args.coupling, args.field)?;
    if args.disorder_p > 0.0 {
        log.seed(args.disorder_seed);
        let mut rng = SplitMix64::new(args.disorder_seed);
        let e = BitVec::random(model.n_bonds(), args.disorder_p, &mut rng);
        model = model.with_disorder(e)?;
    }

    let temperatures: Vec<f64> = match &args.t_list {
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad temperature '{s}'"))
            })
            .collect::<Result<_>>()?,
        None => match (args.t_min, args.t_max, args.n_t) {
            (Some(lo), Some(hi), Some(nt)) => {
                if nt < 1 {
                    bail!("--n-t must be at least 1");
                }
                (0..nt)
                    .map(|i| {
                        if nt == 1 {
                            lo
                        } else {
                            hi - (hi - lo) * i as f64 / (nt - 1) as f64
                        }
                    })
                    .collect()
            }
            (None, None, None) => Schedule::default_grid(),
            _ => bail!("give all of --t-min/--t-max/--n-t, or --t-list, or none for the default"),
        },
    };

    log.seed(args.seed);
    let sched = Schedule::new(
        &temperatures,
        args.cycles,
        args.sweeps,
        args.algorithm,
        args.seed,
    )?
    .with_discard(args.discard)?;

    let series = if args.workers == 1 {
        run_ensemble(&model, &sched, args.runs)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.workers)
            .build()
            .context("building worker pool")?;
        pool.install(|| run_ensemble(&model, &sched, args.runs))?
    };

    let csv = series.to_csv();
    println!(
        "{} points ({} temperatures x cool/heat), {} runs x {} cycles",
        series.points.len(),
        temperatures.len(),
        args.runs,
        args.cycles
    );
    log.write_output(&out_path(dir, &stem, "csv"), csv.as_bytes())?;
    finish(log, dir, &stem)
}

pub fn cmd_bounds(dir: &Path, cmd: &BoundsCmd) -> Result<()> {
    use wegner::bounds;
    let mut log = RunLog::new("bounds", cmd)?;
    let (stem, value) = match cmd {
        BoundsCmd::Tc { f, d, out } => {
            let b = bounds::tiling_tc_bound(*f, *d)?;
            match (b.k_wired, b.t_wired) {
                (Some(k0), Some(t0)) => println!(
                    "rate = {:.6}  coupling gap = {:.6}  K_wired <= {k0:.6}  T_wired >= {t0:.6}",
                    b.rate, b.coupling_gap
                ),
                _ => println!("rate = {:.6}  coupling gap = {:.6}", b.rate, b.coupling_gap),
            }
            (out.clone(), serde_json::to_value(&b)?)
        }
        BoundsCmd::Dual { coupling, out } => {
            let dual = bounds::kw_dual(*coupling)?;
            let fixed = bounds::self_dual_coupling();
            println!("K* = {dual:.12}  self-dual K = {fixed:.12}");
            (
                out.clone(),
                json!({ "coupling": coupling, "dual": dual, "self_dual": fixed }),
            )
        }
        BoundsCmd::Freeze {
            m,
            p,
            coupling,
            distance,
            out,
        } => {
            let region = bounds::freezing_region(*m, *p, *coupling)?;
            println!(
                "contraction = {:.6} (inside region: {}; clean threshold K = {:.6})",
                region.contraction, region.satisfied, region.clean_threshold
            );
            let mut value = serde_json::to_value(&region)?;
            if let Some(d) = distance {
                let b = bounds::delta_f_disorder_bound(*m, *p, *coupling, *d)?;
                println!("delta_f bound (distance {d}) = {b:.6e}");
                value["delta_f_bound"] = json!(b);
            }
            (out.clone(), value)
        }
        BoundsCmd::Hts { l, m, out } => {
            let r = bounds::hts_radius(*l, *m)?;
            println!("high-temperature radius in beta = {r:.12}");
            (out.clone(), json!({ "l": l, "m": m, "radius": r }))
        }
        BoundsCmd::Cumulant {
            s,
            l,
            m,
            coupling,
            field_strength,
            spin_density,
            out,
        } => {
            let case = match (field_strength, spin_density) {
                (0.0, _) => bounds::CumulantCase::ZeroField,
                (_, density) => bounds::CumulantCase::WithField {
                    spin_density: *density,
                },
            };
            let b = bounds::cumulant_coeff_bound(*s, *l, *m, *coupling, *field_strength, case)?;
            println!("per-bond cumulant bound (order {s}) = {b:.6e}");
            (
                out.clone(),
                json!({ "s": s, "l": l, "m": m, "bound": b }),
            )
        }
    };
    log.write_output(&out_path(dir, &stem, "bounds.json"), &json_bytes(&value)?)?;
    finish(log, dir, &stem)
}

fn read_points(log: &mut RunLog, path: &Path, direction: Direction) -> Result<Vec<McPoint>> {
    log.input(path);
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading csv {}", path.display()))?;
    let points = McSeries::from_csv(&text)?;
    Ok(points
        .into_iter()
        .filter(|p| p.direction == direction)
        .collect())
}

fn series_of(points: &[McPoint], quantity: Quantity) -> Result<Series> {
    let pick = |p: &McPoint| -> (f64, f64) {
        match quantity {
            Quantity::M => (p.m, p.m_err),
            Quantity::Chi => (p.chi, p.chi_err),
            Quantity::Eps => (p.eps, p.eps_err),
            Quantity::C => (p.c, p.c_err),
            Quantity::U4 => (p.u4, p.u4_err),
        }
    };
    let x: Vec<f64> = points.iter().map(|p| p.t).collect();
    let (y, y_err): (Vec<f64>, Vec<f64>) = points.iter().map(pick).unzip();
    Ok(Series::new(x, y, y_err, quantity.label())?)
}

pub fn cmd_analyze(dir: &Path, args: &AnalyzeArgs) -> Result<()> {
    let mut log = RunLog::new("analyze", args)?;
    let (stem, value) = match &args.cmd {
        AnalyzeCmd::Peak {
            csv,
            quantity,
            direction,
            window,
            out,
        } => {
            let points = read_points(&mut log, csv, *direction)?;
            let series = series_of(&points, *quantity)?;
            let fit = quartic_peak_fit(&series, *window)?;
            println!(
                "{} peak: T = {:.6} +- {:.6}, height = {:.6} +- {:.6} ({} points)",
                quantity.label(),
                fit.x_peak,
                fit.x_err,
                fit.y_peak,
                fit.y_err,
                fit.n_points
            );
            (out.clone(), serde_json::to_value(&fit)?)
        }
        AnalyzeCmd::Dualize {
            csv,
            direction,
            out,
        } => {
            let points = read_points(&mut log, csv, *direction)?;
            let series = series_of(&points, Quantity::Eps)?;
            let dual = dualize_energy(&series)?;
            println!(
                "dualized {} energy points spanning T* in [{:.4}, {:.4}]",
                dual.len(),
                dual.x.first().copied().unwrap_or(f64::NAN),
                dual.x.last().copied().unwrap_or(f64::NAN)
            );
            log.write_output(&out_path(dir, out, "tsv"), dual.to_tsv().as_bytes())?;
            (out.clone(), serde_json::to_value(&dual)?)
        }
        AnalyzeCmd::Extrapolate { point, mode, out } => {
            let mut points = Vec::new();
            for spec in point {
                let parts: Vec<&str> = spec.split(':').collect();
                if parts.len() != 3 {
                    bail!("--point wants n:value:err, got '{spec}'");
                }
                points.push((
                    parts[0].parse::<f64>().context("point size")?,
                    parts[1].parse::<f64>().context("point value")?,
                    parts[2].parse::<f64>().context("point error")?,
                ));
            }
            let ext = extrapolate_infinite_size(&points, *mode)?;
            println!(
                "intercept = {:.6} +- {:.6} ({} points)",
                ext.intercept, ext.stderr, ext.points_used
            );
            (out.clone(), serde_json::to_value(&ext)?)
        }
        AnalyzeCmd::Crossing {
            csv_a,
            csv_b,
            quantity,
            direction,
            out,
        } => {
            let a = series_of(&read_points(&mut log, csv_a, *direction)?, *quantity)?;
            let b = series_of(&read_points(&mut log, csv_b, *direction)?, *quantity)?;
            let crossings = binder_crossing(&a, &b)?;
            if crossings.is_empty() {
                println!("no crossings in the overlapping range");
            }
            for c in &crossings {
                println!(
                    "crossing in [{:.6}, {:.6}], estimate {:.6}",
                    c.x_lo, c.x_hi, c.x_estimate
                );
            }
            (out.clone(), serde_json::to_value(&crossings)?)
        }
    };
    log.write_output(&out_path(dir, &stem, "analysis.json"), &json_bytes(&value)?)?;
    finish(log, dir, &stem)
}
