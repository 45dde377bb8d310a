use std::io::Write;
use std::path::{Path, PathBuf};

use levelfit::calibration::{self, CalibrationOptions, SigmaTable};
use levelfit::ensemble::{self, EnsembleConfig, ObservedSequence, Spectrum};
use levelfit::fit::{self, EnsembleFitOptions, FitOptions};
use levelfit::io::{CsvTable, Metadata, ValueFile};
use levelfit::model::{uniform_grid, MissingLevelModel, ModelParams};
use levelfit::seed::{derive_seed, Stream};
use levelfit::stats::{self, SpacingHistogram, SpacingSample};
use levelfit::Error;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::Failure;

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub command_line: String,
}

type Outcome = Result<(), Failure>;

pub fn version_text() -> String {
    let table = SigmaTable::bundled();
    let prov: Vec<String> = table
        .provenance()
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    format!(
        "levelfit {}\nbundled sigma table: {}",
        env!("CARGO_PKG_VERSION"),
        prov.join(" ")
    )
}

impl Context<'_> {
    /// Header shared by every output: command line and version, plus the
    /// seed for seeded subcommands.
    fn provenance(&self, seeded: bool) -> Metadata {
        let mut m = Metadata::new();
        m.insert("command".into(), self.command_line.clone());
        m.insert("version".into(), env!("CARGO_PKG_VERSION").into());
        if seeded {
            m.insert("seed".into(), self.cfg.seed.to_string());
        }
        m
    }

    /// Input metadata carried forward, with this stage's provenance on top.
    fn carried(&self, input: &Metadata, seeded: bool) -> Metadata {
        let mut m: Metadata = input
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "command" | "version" | "kind"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        m.extend(self.provenance(seeded));
        m
    }

    fn emit(&self, text: &str, stdout: &mut dyn Write) -> Outcome {
        match &self.cfg.out {
            Some(p) => write_file(p, text),
            None => stdout
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Runtime(e.into())),
        }
    }

    fn table(&self) -> Result<SigmaTable, Failure> {
        match &self.cfg.table {
            None => Ok(SigmaTable::bundled()),
            Some(p) => {
                let text = read(p)?;
                Ok(SigmaTable::parse(&text, !self.cfg.allow_unprovenanced)?)
            }
        }
    }

    fn input(&self) -> Result<ValueFile, Failure> {
        let p = self.cfg.input.as_ref().expect("validated");
        Ok(ValueFile::parse(&read(p)?)?)
    }

    fn histogram(&self) -> Result<SpacingHistogram, Failure> {
        let p = self.cfg.hist.as_ref().expect("validated");
        Ok(SpacingHistogram::from_csv(&CsvTable::parse(&read(p)?)?)?)
    }
}

fn read(p: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(p)
        .map_err(|e| Failure::Runtime(Error::Io(format!("{}: {e}", p.display()))))
}

fn write_file(p: &Path, text: &str) -> Outcome {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.into()))?;
    }
    std::fs::write(p, text)
        .map_err(|e| Failure::Runtime(Error::Io(format!("{}: {e}", p.display()))))
}

fn table_meta(m: &mut Metadata, table: &SigmaTable) {
    for (k, v) in table.provenance() {
        m.insert(format!("table.{k}"), v.clone());
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

pub fn dispatch(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    match ctx.cfg.command.as_str() {
        "generate" => generate(ctx),
        "unfold" => unfold(ctx, stdout),
        "thin" => thin(ctx, stdout),
        "spacings" => spacings(ctx, stdout),
        "hist" => hist(ctx, stdout),
        "model" => model(ctx, stdout),
        "chi2" => chi2(ctx, stdout),
        "calibrate-sigma" => calibrate(ctx, stdout),
        "solve-bn" => solve_bn(ctx, stdout),
        "fit" => fit_one(ctx, stdout),
        "ensemble-fit" => ensemble_fit(ctx, stdout),
        other => Err(Failure::Usage(format!("unknown subcommand {other:?}"))),
    }
}

fn generate(ctx: &Context) -> Outcome {
    let c = ctx.cfg;
    let config = EnsembleConfig::new(c.n_dim, c.beta, c.count, c.seed)?;
    let dir = c.out.as_ref().expect("validated");
    let spectra = (0..c.count)
        .into_par_iter()
        .map(|i| {
            let m = ensemble::sample_beta_hermite(&config, i)?;
            ensemble::eigenvalues(&m)
        })
        .collect::<Result<Vec<Spectrum>, Error>>()?;
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(e.into()))?;
    for (i, s) in spectra.iter().enumerate() {
        let mut meta = ctx.provenance(true);
        meta.insert("index".into(), i.to_string());
        let path: PathBuf = dir.join(format!("spectrum_{i:04}.txt"));
        write_file(&path, &s.to_value_file(meta).to_text())?;
    }
    Ok(())
}

fn unfold(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let file = ctx.input()?;
    let spectrum = Spectrum::from_value_file(&file)?;
    let seq = ensemble::unfold(&spectrum)?;
    let meta = ctx.carried(&file.meta, false);
    ctx.emit(&seq.to_value_file(meta).to_text(), stdout)
}

fn thin(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let file = ctx.input()?;
    let seq = ObservedSequence::from_value_file(&file)?;
    let seed = derive_seed(ctx.cfg.seed, 0, Stream::Thinning);
    let thinned = ensemble::thin(&seq, ctx.cfg.f, seed)?;
    let mut meta = ctx.carried(&file.meta, true);
    meta.insert("f".into(), ctx.cfg.f.to_string());
    ctx.emit(&thinned.to_value_file(meta).to_text(), stdout)
}

fn spacings(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let file = ctx.input()?;
    let seq = ObservedSequence::from_value_file(&file)?;
    let sample = stats::spacings(&seq, ctx.cfg.order)?;
    let mut meta = ctx.carried(&file.meta, false);
    meta.insert("kind".into(), "spacings".into());
    meta.insert("order".into(), ctx.cfg.order.to_string());
    let out = ValueFile {
        meta,
        values: sample.values,
    };
    ctx.emit(&out.to_text(), stdout)
}

fn hist(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let file = ctx.input()?;
    let order = file
        .meta
        .get("order")
        .and_then(|o| o.parse().ok())
        .unwrap_or(0);
    let sample = SpacingSample {
        order,
        values: file.values.clone(),
    };
    let h = stats::histogram(&sample, ctx.cfg.bin_width, ctx.cfg.s_max)?;
    let mut meta = ctx.carried(&file.meta, false);
    meta.insert("kind".into(), "histogram".into());
    ctx.emit(&h.to_csv(meta).to_text(), stdout)
}

fn model(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let c = ctx.cfg;
    let table = ctx.table()?;
    let grid = uniform_grid(c.s_max, c.step)?;
    let params = ModelParams::new(c.q, c.f)?;
    let curve = MissingLevelModel::new(&table)
        .with_k_max(c.k_max)
        .with_source(c.coefficients)
        .model_curve(params, &grid)?;
    let mut meta = ctx.provenance(false);
    table_meta(&mut meta, &table);
    meta.insert("integral".into(), curve.integral().to_string());
    ctx.emit(&curve.to_csv(meta).to_text(), stdout)?;
    if c.gnuplot {
        let out = c.out.as_ref().expect("validated");
        let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let script = format!(
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 's'\nset ylabel 'P(s)'\n\
             plot '{name}' using 1:2 with lines title 'q={}, f={}'\n",
            c.q, c.f
        );
        let mut gp = out.clone().into_os_string();
        gp.push(".gp");
        write_file(Path::new(&gp), &script)?;
    }
    Ok(())
}

fn chi2(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let c = ctx.cfg;
    let table = ctx.table()?;
    let h = ctx.histogram()?;
    let curve = MissingLevelModel::new(&table)
        .with_k_max(c.k_max)
        .with_source(c.coefficients)
        .curve(ModelParams::new(c.q, c.f)?, &h.bin_centers())?;
    let v = json!({
        "q": c.q,
        "f": c.f,
        "chi2": stats::chi2_distance(&h, &curve)?,
        "sup": stats::sup_distance(&h, &curve)?,
        "bins": h.n_bins(),
        "provenance": {
            "command": ctx.command_line,
            "version": env!("CARGO_PKG_VERSION"),
            "hist": c.hist.as_ref().map(|p| p.display().to_string()),
            "table": table.provenance(),
        },
    });
    ctx.emit(&pretty(&v), stdout)
}

fn calibrate(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let c = ctx.cfg;
    let opts = CalibrationOptions {
        q_grid: c.q_grid.clone(),
        n_max: c.n_max,
        n_dim: c.n_dim,
        count: c.count,
        master_seed: c.seed,
        edge_trim: c.edge_trim,
        min_cell: c.min_cell,
    };
    let table = calibration::calibrate_sigma(&opts)?;
    let mut t = table.to_csv();
    t.meta.extend(ctx.provenance(true));
    ctx.emit(&t.to_text(), stdout)
}

fn solve_bn(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let s = calibration::solve_bn(ctx.cfg.order, ctx.cfg.q)?;
    let mut v = serde_json::to_value(s).expect("serializable");
    v["provenance"] = json!({
        "command": ctx.command_line,
        "version": env!("CARGO_PKG_VERSION"),
    });
    ctx.emit(&pretty(&v), stdout)
}

fn fit_options(c: &RunConfig) -> FitOptions {
    FitOptions {
        tolerance: c.tolerance,
        k_max: c.k_max,
        source: c.coefficients,
        ..FitOptions::default()
    }
}

fn fit_one(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let c = ctx.cfg;
    let table = ctx.table()?;
    let h = ctx.histogram()?;
    let opts = fit_options(c);
    let r = fit::fit_ps(&h, &table, &opts)?;
    let mut v = serde_json::to_value(&r).expect("serializable");
    v["provenance"] = json!({
        "command": ctx.command_line,
        "version": env!("CARGO_PKG_VERSION"),
        "input": c.hist.as_ref().map(|p| p.display().to_string()),
        "table": table.provenance(),
        "options": opts,
    });
    ctx.emit(&pretty(&v), stdout)
}

fn ensemble_fit(ctx: &Context, stdout: &mut dyn Write) -> Outcome {
    let c = ctx.cfg;
    let table = ctx.table()?;
    let config = EnsembleConfig::new(c.n_dim, c.beta, c.count, c.seed)?;
    let opts = EnsembleFitOptions {
        fit: FitOptions {
            keep_trace: false,
            ..fit_options(c)
        },
        bin_width: c.bin_width,
        s_max: c.s_max,
        edge_trim: c.edge_trim,
        grid_bins: c.grid_bins,
    };
    let d = fit::ensemble_fit(&config, c.f, &table, &opts)?;
    let provenance = json!({
        "command": ctx.command_line,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": c.seed,
        "n": c.n_dim,
        "beta": c.beta,
        "f": c.f,
        "count": c.count,
        "table": table.provenance(),
        "options": opts,
    });
    let summary = json!({
        "summary": d.summary,
        "q_edges": d.q_edges,
        "f_edges": d.f_edges,
        "modes": d.modes(0.25),
        "spectra": d.spectra,
        "provenance": provenance,
    });
    match &c.out {
        Some(stem) => {
            let mut meta = ctx.provenance(true);
            table_meta(&mut meta, &table);
            for (k, v) in [("n", c.n_dim.to_string()), ("beta", c.beta.to_string()), ("f", c.f.to_string())] {
                meta.insert(k.into(), v);
            }
            let mut csv = stem.clone().into_os_string();
            csv.push(".csv");
            write_file(Path::new(&csv), &d.to_csv(meta).to_text())?;
            let mut js = stem.clone().into_os_string();
            js.push(".json");
            write_file(Path::new(&js), &pretty(&summary))
        }
        None => stdout
            .write_all(pretty(&summary).as_bytes())
            .map_err(|e| Failure::Runtime(e.into())),
    }
}
