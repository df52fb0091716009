use crate::args::*;
use crate::failure::{Classify, CliResult, ExitKind, Failure};
use crate::output::{num, OutDir, Table};
use crate::svg;
use anyhow::Context;
use epx::cv::{self, CvConfig, CvResult, Pipeline};
use epx::dataset::{self, Dataset, DigitPlaceholder, GroupingPlan, LoadOptions, SynthKind, SynthSpec};
use epx::ensemble::{self, EpxModel, FormationAudit, ModelError};
use epx::forest::ForestConfig;
use epx::formation::{self, FormationConfig, ScreeningReport};
use epx::grouping::{self, WardVariant};
use epx::metrics::{self, RankedScores};

fn load(args: &DataArgs) -> CliResult<Dataset> {
    let mut opts = LoadOptions::new(args.label.clone());
    opts.id_column = args.id.clone();
    if let Some(k) = &args.kinds {
        opts.kind_hints = dataset::read_kind_hints(k)?;
    }
    Ok(dataset::load_csv(&args.data, &opts)?)
}

fn ids(ds: &Dataset) -> Vec<String> {
    match ds.ids() {
        Some(ids) => ids.to_vec(),
        None => (1..=ds.n_obs()).map(|i| i.to_string()).collect(),
    }
}

fn ward(w: WardArg) -> WardVariant {
    match w {
        WardArg::Raw => WardVariant::Raw,
        WardArg::Squared => WardVariant::Squared,
    }
}

fn plan(ds: &Dataset, g: &GroupingArgs) -> CliResult<GroupingPlan> {
    if let Some(p) = &g.groups {
        return Ok(dataset::read_plan(p, ds)?);
    }
    Ok(match g.grouping {
        GroupingMode::Default => dataset::default_plan(ds, &DigitPlaceholder),
        GroupingMode::Names => dataset::group_by_names(ds, &DigitPlaceholder),
        GroupingMode::Singletons => dataset::singleton_groups(ds),
        GroupingMode::Clusters => {
            grouping::cluster_groups(ds, g.clusters, ward(g.ward), &DigitPlaceholder).kind(ExitKind::Data)?
        }
    })
}

fn formation_config(f: &FormationArgs, t: &TreeArgs, seed: u64) -> FormationConfig {
    FormationConfig {
        alpha: f.alpha,
        permutations: f.permutations,
        formation_trees: f.formation_trees,
        mtry: t.mtry,
        min_node_size: t.min_node_size,
        ..FormationConfig::new(seed)
    }
}

fn forest_config(trees: usize, t: &TreeArgs, seed: u64) -> ForestConfig {
    ForestConfig {
        n_trees: trees,
        mtry: t.mtry,
        min_node_size: t.min_node_size,
        seed,
    }
}

fn group_label(ds: &Dataset, g: &[usize]) -> String {
    g.iter()
        .map(|&j| ds.columns()[j].name.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

fn load_model(path: &std::path::Path) -> CliResult<EpxModel> {
    ensemble::load_model(path).map_err(|e| {
        let kind = match e {
            ModelError::Io { .. } => ExitKind::Io,
            _ => ExitKind::Model,
        };
        Failure::new(kind, e.into())
    })
}

pub fn synth(a: &SynthArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("synth", a)?;
    let spec = SynthSpec {
        kind: match a.kind {
            SynthKindArg::Binary => SynthKind::Binary,
            SynthKindArg::Continuous => SynthKind::Continuous,
        },
        ..SynthSpec::binary(a.n, a.active_fraction, a.blocks, a.block_size, a.noise, a.strength)
    };
    let data = dataset::synth_generate(&spec, a.seed)?;
    let width = a.n.to_string().len();
    let obs_ids: Vec<String> = (1..=a.n).map(|i| format!("obs{i:0width$}")).collect();
    let ds = data.dataset.with_ids(obs_ids.clone())?;
    dataset::write_csv(&ds, &out.path("data.csv"))?;

    let mut roles = vec![String::new(); ds.n_vars()];
    for (b, block) in data.truth.blocks.iter().enumerate() {
        for &j in block {
            roles[j] = format!("block{}", b + 1);
        }
    }
    for &j in &data.truth.noise {
        roles[j] = "noise".into();
    }
    let var_rows: Vec<Vec<String>> = ds
        .names()
        .iter()
        .zip(&roles)
        .map(|(n, r)| vec![n.to_string(), r.clone()])
        .collect();
    out.write_csv("truth_variables.csv", &["variable", "role"], &var_rows)?;
    let obs_rows: Vec<Vec<String>> = (0..ds.n_obs())
        .map(|i| {
            vec![
                obs_ids[i].clone(),
                ds.labels()[i].to_string(),
                data.truth.mechanism[i].map_or(String::new(), |b| format!("block{}", b + 1)),
            ]
        })
        .collect();
    out.write_csv("truth_observations.csv", &["id", "y", "mechanism"], &obs_rows)
}

pub fn null(a: &NullArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("null", a)?;
    let calib = metrics::null_calibration(a.n, a.m, a.b, a.alpha, a.seed).kind(ExitKind::Data)?;
    log::info!(
        "null: a_0.5 = {}, a_{} = {}",
        calib.a_median,
        a.alpha,
        calib.a_quantile
    );
    out.write_csv(
        "null_summary.csv",
        &["n_obs", "n_active", "permutations", "alpha", "a_median", "a_quantile", "seed"],
        &[vec![
            a.n.to_string(),
            a.m.to_string(),
            a.b.to_string(),
            num(a.alpha),
            num(calib.a_median),
            num(calib.a_quantile),
            a.seed.to_string(),
        ]],
    )?;
    let rows: Vec<Vec<String>> = calib
        .samples
        .iter()
        .enumerate()
        .map(|(b, &v)| vec![(b + 1).to_string(), num(v)])
        .collect();
    out.write_csv("null_samples.csv", &["draw", "ave_p"], &rows)
}

pub fn cluster_groups(a: &ClusterArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("cluster-groups", a)?;
    let ds = load(&a.data)?;
    let plan = grouping::cluster_groups(&ds, a.clusters, ward(a.ward), &DigitPlaceholder).kind(ExitKind::Data)?;
    log::info!("cluster-groups: {} groups from {} variables", plan.len(), ds.n_vars());
    Ok(dataset::write_plan(&out.path("groups.txt"), plan.groups(), &ds)?)
}

fn screening_rows(ds: &Dataset, stage: &str, report: &ScreeningReport) -> Vec<Vec<String>> {
    let witness = |w: Option<usize>| w.map_or(String::new(), |k| group_label(ds, &report.groups[k].group));
    report
        .groups
        .iter()
        .map(|g| {
            vec![
                stage.to_string(),
                group_label(ds, &g.group),
                num(g.a_single),
                g.strong_alone.to_string(),
                witness(g.joint_witness),
                witness(g.ensemble_witness),
                g.survived.to_string(),
                g.fallback.to_string(),
            ]
        })
        .collect()
}

pub fn form(a: &FormArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("form", a)?;
    let ds = load(&a.data)?;
    let plan = plan(&ds, &a.grouping)?;
    let cfg = formation_config(&a.formation, &a.tree, a.seed);
    let result = formation::form_phalanxes(&ds, &plan, &cfg).kind(ExitKind::Compute)?;

    dataset::write_plan(&out.path("phalanxes.txt"), &result.phalanxes, &ds)?;
    let mut rows = screening_rows(&ds, "initial", &result.initial_screening);
    rows.extend(screening_rows(&ds, "phalanx", &result.phalanx_screening));
    out.write_csv(
        "screening.csv",
        &[
            "stage",
            "group",
            "a_single",
            "strong_alone",
            "joint_witness",
            "ensemble_witness",
            "survived",
            "fallback",
        ],
        &rows,
    )?;

    let mut trace = Vec::new();
    let trace_steps = result
        .merge_trace
        .events
        .iter()
        .map(|e| (&e.candidates, Some((&e.left, &e.right))))
        .chain(std::iter::once((&result.merge_trace.final_ratios, None)));
    for (step, (candidates, chosen)) in trace_steps.enumerate() {
        for c in candidates {
            let merged = chosen.is_some_and(|(l, r)| *l == c.left && *r == c.right);
            trace.push(vec![
                (step + 1).to_string(),
                group_label(&ds, &c.left),
                group_label(&ds, &c.right),
                num(c.a_joint),
                num(c.a_ensemble),
                num(c.ratio),
                merged.to_string(),
            ]);
        }
    }
    out.write_csv(
        "merge_trace.csv",
        &["step", "left", "right", "a_joint", "a_ensemble", "ratio", "merged"],
        &trace,
    )?;

    let c = result.counts;
    out.write_csv(
        "formation_summary.csv",
        &[
            "variables",
            "initial_groups",
            "survivors",
            "candidates",
            "phalanxes",
            "fits",
            "a_median",
            "a_quantile",
        ],
        &[vec![
            c.variables.to_string(),
            c.initial_groups.to_string(),
            c.survivors.to_string(),
            c.candidates.to_string(),
            c.phalanxes.to_string(),
            result.fit_counter.to_string(),
            num(result.a_median),
            num(result.a_quantile),
        ]],
    )?;
    out.write_json("audit.json", &FormationAudit::from(&result))
}

pub fn fit(a: &FitArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("fit", a)?;
    let ds = load(&a.data)?;
    let phalanxes = dataset::read_plan(&a.phalanxes, &ds)?;
    let cfg = forest_config(a.trees, &a.tree, a.seed);
    let mut model = ensemble::fit_epx(&ds, phalanxes.groups(), &cfg).kind(ExitKind::Compute)?;
    if let Some(p) = &a.audit {
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("reading {}", p.display()))
            .kind(ExitKind::Io)?;
        let audit: FormationAudit = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", p.display()))
            .kind(ExitKind::Data)?;
        model = model.with_formation(audit);
    }
    log::info!("fit: {} phalanxes, {} trees each", model.len(), a.trees);
    ensemble::save_model(&model, &out.path("model.json")).kind(ExitKind::Io)
}

pub fn rank(a: &RankArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("rank", a)?;
    let model = load_model(&a.model)?;
    let table = Table::read(&a.data)?;
    let id_pos = match &a.id {
        Some(id) => Some(
            table
                .position(id)
                .ok_or_else(|| Failure::msg(ExitKind::Data, format!("no column `{id}` in {}", a.data.display())))?,
        ),
        None => None,
    };
    let used = model.used_features();
    let mut columns = Vec::with_capacity(table.header.len());
    for (j, name) in table.header.iter().enumerate() {
        if used.contains(&name.as_str()) {
            columns.push(table.numeric(j).map_err(|e| Failure::msg(ExitKind::Data, e))?);
        } else {
            columns.push(vec![f64::NAN; table.rows.len()]);
        }
    }
    let rows: Vec<Vec<f64>> = (0..table.rows.len())
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    let x = model.align_features(&table.header, &rows).kind(ExitKind::Data)?;
    let probs = ensemble::predict_epx(&model, &x).kind(ExitKind::Data)?;
    let ranks = metrics::expected_ranks(&probs);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&i, &j| probs[j].total_cmp(&probs[i]).then(i.cmp(&j)));
    let out_rows: Vec<Vec<String>> = order
        .iter()
        .map(|&i| {
            let id = id_pos.map_or_else(|| (i + 1).to_string(), |p| table.rows[i][p].clone());
            vec![id, num(probs[i]), num(ranks[i])]
        })
        .collect();
    out.write_csv("ranking.csv", &["id", "probability", "rank"], &out_rows)
}

fn probability_columns(prefix: &str, res: &CvResult) -> Vec<String> {
    (1..=res.repeats()).map(|r| format!("{prefix}repeat_{r}")).collect()
}

pub fn cv(a: &CvArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("cv", a)?;
    let ds = load(&a.data)?;
    let forest = forest_config(a.trees, &a.tree, a.seed);
    let pipeline = match a.pipeline {
        PipelineArg::Fixed => {
            let path = a
                .phalanxes
                .as_ref()
                .ok_or_else(|| Failure::msg(ExitKind::Usage, "--pipeline fixed requires --phalanxes"))?;
            Pipeline::FixedPhalanxes {
                phalanxes: dataset::read_plan(path, &ds)?.groups().to_vec(),
                forest,
            }
        }
        PipelineArg::Reform => Pipeline::Reformation {
            plan: plan(&ds, &a.grouping)?,
            formation: formation_config(&a.formation, &a.tree, a.seed),
            forest,
        },
        PipelineArg::Forest => Pipeline::PlainForest { forest },
    };
    let cfg = CvConfig {
        k: a.folds,
        repeats: a.repeats,
        ie_shortlist: a.ie_shortlist,
        seed: a.seed,
    };
    let res = cv::cross_validate(&ds, &pipeline, &cfg).kind(ExitKind::Compute)?;
    let baseline = if a.baseline {
        Some(cv::cross_validate(&ds, &Pipeline::PlainForest { forest }, &cfg).kind(ExitKind::Compute)?)
    } else {
        None
    };

    let mut header = vec!["repeat", "ave_p", "ie"];
    if baseline.is_some() {
        header.extend(["baseline_ave_p", "baseline_ie", "beats_baseline"]);
    }
    let rows: Vec<Vec<String>> = (0..res.repeats())
        .map(|r| {
            let mut row = vec![(r + 1).to_string(), num(res.ave_p[r]), num(res.ie[r])];
            if let Some(b) = &baseline {
                row.extend([num(b.ave_p[r]), num(b.ie[r]), (res.ave_p[r] > b.ave_p[r]).to_string()]);
            }
            row
        })
        .collect();
    out.write_csv("cv_repeats.csv", &header, &rows)?;

    let pipeline_name = match a.pipeline {
        PipelineArg::Fixed => "fixed",
        PipelineArg::Reform => "reform",
        PipelineArg::Forest => "forest",
    };
    let mut summary = vec![vec![
        pipeline_name.to_string(),
        res.repeats().to_string(),
        num(res.mean_ave_p()),
        num(res.mean_ie()),
        String::new(),
    ]];
    if let Some(b) = &baseline {
        summary[0][4] = cv::win_count(&res, b).kind(ExitKind::Compute)?.to_string();
        summary.push(vec![
            "baseline".into(),
            b.repeats().to_string(),
            num(b.mean_ave_p()),
            num(b.mean_ie()),
            String::new(),
        ]);
        log::info!(
            "cv: {} beats the plain forest in {} of {} repeats",
            pipeline_name,
            summary[0][4],
            res.repeats()
        );
    }
    out.write_csv(
        "cv_summary.csv",
        &["pipeline", "repeats", "mean_ave_p", "mean_ie", "wins"],
        &summary,
    )?;

    let mut prob_header = vec!["id".to_string(), ds.label_name().to_string()];
    prob_header.extend(probability_columns("", &res));
    if let Some(b) = &baseline {
        prob_header.extend(probability_columns("baseline_", b));
    }
    let obs = ids(&ds);
    let prob_rows: Vec<Vec<String>> = (0..ds.n_obs())
        .map(|i| {
            let mut row = vec![obs[i].clone(), ds.labels()[i].to_string()];
            row.extend(res.probabilities.iter().map(|p| num(p[i])));
            if let Some(b) = &baseline {
                row.extend(b.probabilities.iter().map(|p| num(p[i])));
            }
            row
        })
        .collect();
    let prob_header: Vec<&str> = prob_header.iter().map(String::as_str).collect();
    out.write_csv("cv_probabilities.csv", &prob_header, &prob_rows)
}

pub fn diversity(a: &DiversityArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("diversity", a)?;
    let ds = load(&a.data)?;
    let model = load_model(&a.model)?;
    if model.feature_names().iter().map(String::as_str).ne(ds.names()) {
        return Err(Failure::msg(
            ExitKind::Data,
            "dataset columns differ from the model's training columns",
        ));
    }
    let forest = ForestConfig {
        seed: a.seed,
        ..model.train_meta().forest
    };
    let cfg = CvConfig {
        k: a.folds,
        repeats: 1,
        ie_shortlist: epx::metrics::DEFAULT_IE_SHORTLIST,
        seed: a.seed,
    };
    let pipeline = Pipeline::FixedPhalanxes {
        phalanxes: model.phalanxes().to_vec(),
        forest,
    };
    let res = cv::cross_validate(&ds, &pipeline, &cfg).kind(ExitKind::Compute)?;
    let baseline = if a.baseline {
        Some(cv::cross_validate(&ds, &Pipeline::PlainForest { forest }, &cfg).kind(ExitKind::Compute)?)
    } else {
        None
    };
    let map = cv::diversity_map(&ds, &model, &res, 0, baseline.as_ref().map(|b| ("RF", b)))
        .kind(ExitKind::Compute)?;

    let obs = ids(&ds);
    let mut header = vec!["id"];
    header.extend(map.columns.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = map
        .rows
        .iter()
        .zip(&map.ranks)
        .map(|(&i, ranks)| {
            let mut row = vec![obs[i].clone()];
            row.extend(ranks.iter().map(|&r| num(r)));
            row
        })
        .collect();
    out.write_csv("diversity.csv", &header, &rows)?;
    let avep_rows: Vec<Vec<String>> = map
        .columns
        .iter()
        .zip(&map.ave_p)
        .map(|(c, &v)| vec![c.clone(), num(v)])
        .collect();
    out.write_csv("diversity_avep.csv", &["column", "ave_p"], &avep_rows)?;
    if a.svg {
        out.write_text(
            "diversity.svg",
            &svg::rank_heatmap(&map.columns, &map.ave_p, &map.ranks, ds.n_obs()),
        )?;
    }
    Ok(())
}

pub fn plot_hits(a: &PlotHitsArgs) -> CliResult<()> {
    let out = OutDir::create(&a.out)?;
    out.manifest("plot-hits", a)?;
    let data = Table::read(&a.data)?;
    let label_pos = data
        .position(&a.label)
        .ok_or_else(|| Failure::msg(ExitKind::Data, format!("no label column `{}`", a.label)))?;
    let labels: Vec<u8> = data
        .numeric(label_pos)
        .map_err(|e| Failure::msg(ExitKind::Data, e))?
        .into_iter()
        .enumerate()
        .map(|(r, v)| match v {
            0.0 => Ok(0),
            1.0 => Ok(1),
            _ => Err(Failure::msg(ExitKind::Data, format!("row {}: label {v} is not 0 or 1", r + 1))),
        })
        .collect::<CliResult<_>>()?;
    let scores = Table::read(&a.scores)?;
    if scores.rows.len() != labels.len() {
        return Err(Failure::msg(
            ExitKind::Data,
            format!("{} score rows for {} labelled rows", scores.rows.len(), labels.len()),
        ));
    }
    let selected: Vec<(String, Vec<f64>)> = match &a.columns {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| {
                let j = scores
                    .position(name)
                    .ok_or_else(|| Failure::msg(ExitKind::Data, format!("no score column `{name}`")))?;
                let v = scores.numeric(j).map_err(|e| Failure::msg(ExitKind::Data, e))?;
                Ok((name.to_string(), v))
            })
            .collect::<CliResult<_>>()?,
        None => (0..scores.header.len())
            .filter(|&j| scores.header[j] != a.label)
            .filter_map(|j| scores.numeric(j).ok().map(|v| (scores.header[j].clone(), v)))
            .collect(),
    };
    if selected.is_empty() {
        return Err(Failure::msg(ExitKind::Data, "no numeric score columns"));
    }
    let n = labels.len();
    let max_n = a.max_n.unwrap_or(n).min(n);
    let shortlist = a.ie_shortlist.min(n);
    let mut curves = Vec::with_capacity(selected.len());
    let mut summary = Vec::with_capacity(selected.len());
    for (name, s) in &selected {
        let ranked = RankedScores::new(s, &labels).kind(ExitKind::Data)?;
        let curve = metrics::hit_curve(&ranked).kind(ExitKind::Data)?;
        summary.push(vec![
            name.clone(),
            num(metrics::ave_p(&ranked).kind(ExitKind::Data)?),
            num(metrics::initial_enhancement(&ranked, shortlist).kind(ExitKind::Data)?),
        ]);
        curves.push((name.clone(), curve.hits));
    }
    let mut header = vec!["n"];
    header.extend(selected.iter().map(|(name, _)| name.as_str()));
    let rows: Vec<Vec<String>> = (1..=max_n)
        .map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(curves.iter().map(|(_, h)| num(h[k - 1])));
            row
        })
        .collect();
    out.write_csv("hits.csv", &header, &rows)?;
    out.write_csv("hits_summary.csv", &["column", "ave_p", "ie"], &summary)?;
    let n_active = labels.iter().filter(|&&y| y == 1).count();
    out.write_text("hits.svg", &svg::hit_curves(&curves, n_active, n, max_n))
}
