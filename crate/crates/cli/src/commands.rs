use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use mmda_core::assets::AssetStore;
use mmda_core::corpus::{domain_stats, domain_stats_csv, parse_testset, sample_balanced, SampledSet, TestSet};
use mmda_core::hitgen::{build_hits as make_hits, Condition, Hit, ItemKind};
use mmda_core::qc::{filter_campaign, parse_overrides, KeptJudgment, Overrides, SummaryRow};
use mmda_core::ranking::{
    replication_correlation, significance_matrix, system_scores, z_pools, SignificanceMatrix, SystemScorecard,
    DEFAULT_LEVELS,
};
use mmda_core::raster::render_hit_rasters;
use mmda_core::report::{
    appendix_csv, emit_report, heatmap_csv, matrix_json, parse_ranking_csv, ranking_csv, replication_json,
    ConditionReport, ReportInput,
};
use mmda_core::seeds::derive_seed;
use mmda_core::sim::{planted_qualities, population, simulate_campaign, synthetic_tsv, system_names, wmt_shaped_domains};
use mmda_core::tts::{CloudProvider, ProviderKind, StubProvider, TtsGateway, TtsProvider};
use mmda_core::workdir::{load_hits, load_sessions, read_json, read_jsonl, save_hits, write_json, write_jsonl, Workdir};

use crate::config::Settings;
use crate::error::{CliResult, Failure};
use crate::manifest::{digests, record, Step};

fn workdir(s: &Settings) -> Workdir {
    Workdir::new(&s.workdir)
}

fn write_bytes(path: &Path, data: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, data)?;
    Ok(())
}

fn finish(s: &Settings, key: &str, seeds: &[(&str, u64)], outputs: &[&str]) -> CliResult<()> {
    let wd = workdir(s);
    let mut digest = BTreeMap::new();
    for o in outputs {
        digest.extend(digests(&wd, o)?);
    }
    let step = Step {
        command: key.split('/').next().unwrap_or(key).to_string(),
        argv: std::env::args().collect(),
        settings: s.clone(),
        seeds: seeds.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        outputs: digest,
    };
    record(&wd, key, step)
}

fn require(path: &Path, hint: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::validation(format!("{} not found; {hint}", path.display())))
    }
}

fn clear_dir(dir: &Path, ext: &str) -> CliResult<()> {
    if dir.exists() {
        for e in std::fs::read_dir(dir)? {
            let p = e?.path();
            if p.extension().is_some_and(|x| x == ext) {
                std::fs::remove_file(p)?;
            }
        }
    }
    Ok(())
}

pub fn load_testset(wd: &Workdir) -> CliResult<TestSet> {
    let corpus = wd.corpus();
    require(&corpus.join("testset.tsv"), "run `mmda ingest` first")?;
    let testset = std::fs::read(corpus.join("testset.tsv"))?;
    let mut outputs = BTreeMap::new();
    let dir = corpus.join("outputs");
    if dir.exists() {
        for e in std::fs::read_dir(&dir)? {
            let p = e?.path();
            if p.extension().is_some_and(|x| x == "tsv") {
                let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                outputs.insert(name, std::fs::read(&p)?);
            }
        }
    }
    Ok(parse_testset(&testset, &outputs)?)
}

fn read_outputs_dir(dir: &Path) -> CliResult<BTreeMap<String, Vec<u8>>> {
    let mut outputs = BTreeMap::new();
    for e in std::fs::read_dir(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))? {
        let p = e?.path();
        if p.extension().is_some_and(|x| x == "tsv") {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            outputs.insert(name, std::fs::read(&p)?);
        }
    }
    Ok(outputs)
}

pub fn ingest(s: &Settings, synthetic_systems: Option<usize>) -> CliResult<()> {
    let wd = workdir(s);
    let mut seeds = vec![];
    let (tsv, outputs) = match synthetic_systems {
        Some(n) => {
            if n < 2 {
                return Err(Failure::validation("need at least 2 synthetic systems"));
            }
            let seed = derive_seed(s.root_seed, "corpus");
            seeds.push(("corpus", seed));
            synthetic_tsv(&wmt_shaped_domains(), &system_names(n), seed)
        }
        None => {
            let (Some(testset), Some(outputs)) = (&s.testset, &s.outputs) else {
                return Err(Failure::Usage("ingest needs --testset and --outputs, or --synthetic-systems".into()));
            };
            let bytes = std::fs::read(testset).map_err(|e| Failure::Io(format!("{}: {e}", testset.display())))?;
            (bytes, read_outputs_dir(outputs)?)
        }
    };
    let ts = parse_testset(&tsv, &outputs)?;

    let corpus = wd.corpus();
    clear_dir(&corpus.join("outputs"), "tsv")?;
    write_bytes(&corpus.join("testset.tsv"), ts.to_testset_tsv().as_bytes())?;
    for sys in ts.systems() {
        let body = ts.to_output_tsv(sys).expect("system listed by the test set");
        write_bytes(&corpus.join("outputs").join(format!("{sys}.tsv")), body.as_bytes())?;
    }
    let stats = domain_stats(&ts);
    write_bytes(&corpus.join("domain_stats.csv"), domain_stats_csv(&stats).as_bytes())?;
    let qualities = corpus.join("qualities.json");
    if synthetic_systems.is_some() {
        let seed = derive_seed(s.root_seed, "qualities");
        seeds.push(("qualities", seed));
        let systems: Vec<String> = ts.systems().map(String::from).collect();
        let q = planted_qualities(&systems, s.simulation.quality_center, s.simulation.quality_spacing, seed);
        write_json(&qualities, &q)?;
    } else if qualities.exists() {
        std::fs::remove_file(&qualities)?;
    }

    println!("ingested {} segments, {} systems", ts.segments().len(), ts.num_systems());
    println!("{:<14} {:>8} {:>6} {:>8}", "domain", "segments", "docs", "avg_len");
    for d in &stats {
        println!("{:<14} {:>8} {:>6} {:>8}", d.domain, d.segment_count, d.document_count, d.avg_doc_length_display());
    }
    finish(s, "ingest", &seeds, &["corpus"])
}

pub fn sample(s: &Settings) -> CliResult<()> {
    let wd = workdir(s);
    let ts = load_testset(&wd)?;
    let sampled = sample_balanced(&ts, s.sampling.target, s.sampling.seed)?;
    let path = wd.corpus().join("sample.json");
    write_json(&path, &sampled)?;
    println!(
        "sampled {} segments from {} documents (target {}, seed {})",
        sampled.total_segments(),
        sampled.selected_doc_ids.len(),
        s.sampling.target,
        s.sampling.seed
    );
    for d in &sampled.per_domain {
        println!("  {:<14} {:>4} segments in {:>3} documents (quota {})", d.domain, d.segments, d.documents, d.quota);
    }
    println!("manifest sha256 {}", crate::manifest::sha256_file(&path)?);
    finish(s, "sample", &[("sampling", s.sampling.seed)], &["corpus/sample.json"])
}

fn load_sample(wd: &Workdir) -> CliResult<SampledSet> {
    let path = wd.corpus().join("sample.json");
    require(&path, "run `mmda sample` first")?;
    Ok(read_json(&path)?)
}

fn valid_campaign(name: &str) -> CliResult<()> {
    if !name.is_empty() && !name.starts_with('.') && name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
        Ok(())
    } else {
        Err(Failure::Usage(format!("campaign name {name:?} may contain only ASCII letters, digits, '-', '_' and '.'")))
    }
}

pub fn build_hits(s: &Settings, condition: Condition, campaign: &str) -> CliResult<()> {
    valid_campaign(campaign)?;
    let wd = workdir(s);
    let ts = load_testset(&wd)?;
    let sampled = load_sample(&wd)?;
    let mut hits = make_hits(&ts, &sampled, condition, &s.hit_config(), s.hitgen.seed, campaign)?;
    if condition == Condition::TextOnly {
        let store = Arc::new(AssetStore::open(wd.assets())?);
        hits = hits.iter().map(|h| render_hit_rasters(&store, h)).collect::<Result<_, _>>()?;
    }
    let dir = wd.hits(campaign);
    clear_dir(&dir, "json")?;
    save_hits(&dir, &hits)?;
    let items: usize = hits.iter().map(|h| h.items.len()).sum();
    let qc: usize = hits.iter().map(|h| h.qc_items().count()).sum();
    println!("{} HITs for {campaign} ({condition}): {items} items, {qc} quality-control", hits.len());
    let mut outputs = vec![format!("hits/{campaign}")];
    if condition == Condition::TextOnly {
        outputs.push("assets/index.json".into());
    }
    let outputs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    finish(s, &format!("build-hits/{campaign}"), &[("hitgen", s.hitgen.seed)], &outputs)
}

fn load_campaign_hits(wd: &Workdir, campaign: &str) -> CliResult<Vec<Hit>> {
    let dir = wd.hits(campaign);
    let hits = load_hits(&dir)?;
    if hits.is_empty() {
        return Err(Failure::validation(format!("no HITs in {}; run `mmda build-hits` first", dir.display())));
    }
    Ok(hits)
}

fn synthesize_all<P: TtsProvider>(s: &Settings, store: Arc<AssetStore>, provider: P, hits: &[Hit]) -> CliResult<Vec<Hit>> {
    let voice = s.voice();
    voice.validate()?;
    let gw = TtsGateway::new(store, provider);
    let distinct: BTreeSet<&str> = hits.iter().flat_map(|h| h.items.iter().map(|i| i.shown_text.as_str())).collect();
    let texts: Vec<&str> = distinct.into_iter().collect();
    for r in gw.synthesize_many(&texts, &voice, s.tts.parallelism) {
        r?;
    }
    let mut out = Vec::with_capacity(hits.len());
    let mut total_ms = 0;
    for h in hits {
        let synth = gw.synthesize_hit(h, &voice)?;
        total_ms += synth.total_duration_ms;
        out.push(synth.hit);
    }
    let stats = gw.stats();
    println!(
        "{} distinct texts, {} provider calls, {} cache hits, {:.1} min of audio",
        texts.len(),
        stats.provider_calls,
        stats.cache_hits,
        total_ms as f64 / 60_000.0
    );
    Ok(out)
}

pub fn synth_audio(s: &Settings, campaign: &str) -> CliResult<()> {
    let wd = workdir(s);
    let hits = load_campaign_hits(&wd, campaign)?;
    if let Some(h) = hits.iter().find(|h| h.condition != Condition::Multimodal) {
        return Err(Failure::validation(format!("HIT {} is {}, audio is only rendered for multimodal HITs", h.hit_id, h.condition)));
    }
    let store = Arc::new(AssetStore::open(wd.assets())?);
    let hits = match s.tts.provider {
        ProviderKind::Stub => synthesize_all(s, store, StubProvider, &hits)?,
        ProviderKind::Cloud => synthesize_all(s, store, CloudProvider::from_env(s.tts.endpoint.clone())?, &hits)?,
    };
    save_hits(&wd.hits(campaign), &hits)?;
    finish(s, &format!("synth-audio/{campaign}"), &[], &[&format!("hits/{campaign}"), "assets/index.json"])
}

pub fn serve(s: &Settings, static_dir: Option<&Path>) -> CliResult<()> {
    let wd = workdir(s);
    let addr: std::net::SocketAddr = format!("{}:{}", s.service.bind, s.service.port)
        .parse()
        .map_err(|e| Failure::Usage(format!("bad bind address: {e}")))?;
    let mut state = mmda_service::AppState::open(wd, mmda_service::system_clock())
        .map_err(|e| Failure::Io(e.to_string()))?
        .with_default_lease(s.service.lease_ms);
    if let Some(d) = static_dir {
        state = state.with_static_dir(d);
    }
    tracing_subscriber::fmt().with_max_level(tracing_subscriber::filter::LevelFilter::INFO).init();
    let rt = tokio::runtime::Runtime::new()?;
    println!("serving {} on http://{addr}", s.workdir.display());
    rt.block_on(mmda_service::serve(state, addr))?;
    Ok(())
}

pub fn simulate_workers(s: &Settings, campaign: &str, reliable: usize, random: usize, constant: usize) -> CliResult<()> {
    if reliable + random + constant == 0 {
        return Err(Failure::Usage("give at least one of --reliable, --random, --constant".into()));
    }
    if s.simulation.hits_per_worker == 0 {
        return Err(Failure::validation("hits_per_worker must be positive"));
    }
    let wd = workdir(s);
    let hits = load_campaign_hits(&wd, campaign)?;
    let qpath = wd.corpus().join("qualities.json");
    let mut seeds = vec![("simulation", s.simulation.seed)];
    let qualities: BTreeMap<String, f64> = if qpath.exists() {
        read_json(&qpath)?
    } else {
        let systems: BTreeSet<String> =
            hits.iter().flat_map(|h| h.items.iter().filter(|i| i.kind == ItemKind::Genuine)).map(|i| i.system_id.clone()).collect();
        let seed = derive_seed(s.root_seed, "qualities");
        seeds.push(("qualities", seed));
        let systems: Vec<String> = systems.into_iter().collect();
        let q = planted_qualities(&systems, s.simulation.quality_center, s.simulation.quality_spacing, seed);
        write_json(&qpath, &q)?;
        q
    };
    let workers = population(reliable, random, constant);
    let sessions =
        simulate_campaign(&hits, &workers, &qualities, &s.persona_params(), s.simulation.hits_per_worker, s.simulation.seed);
    let dir = wd.sessions(campaign);
    write_jsonl(&dir.join("simulated.jsonl"), &sessions)?;
    let personas: BTreeMap<&str, _> = workers.iter().map(|w| (w.worker_id.as_str(), w.persona)).collect();
    write_json(&dir.join("personas.json"), &personas)?;
    println!("{} sessions from {} simulated workers over {} HITs", sessions.len(), workers.len(), hits.len());
    finish(s, &format!("simulate-workers/{campaign}"), &seeds, &[&format!("sessions/{campaign}"), "corpus/qualities.json"])
}

fn hit_map(hits: Vec<Hit>) -> BTreeMap<String, Hit> {
    hits.into_iter().map(|h| (h.hit_id.clone(), h)).collect()
}

pub fn filter(s: &Settings, campaign: &str, overrides: Option<&Path>) -> CliResult<()> {
    let wd = workdir(s);
    let hits = hit_map(load_campaign_hits(&wd, campaign)?);
    let sessions = load_sessions(&wd.sessions(campaign))?;
    if sessions.is_empty() {
        return Err(Failure::validation(format!("no sessions under {}", wd.sessions(campaign).display())));
    }
    let overrides: Overrides = match overrides {
        Some(p) => parse_overrides(&std::fs::read(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?)?,
        None => Overrides::new(),
    };
    let out = filter_campaign(&sessions, &hits, &s.qc_config(), &overrides)?;
    let report = wd.report();
    write_jsonl(&report.join(format!("kept_{campaign}.jsonl")), &out.kept)?;
    write_json(&report.join(format!("reliability_{campaign}.json")), &out.reports)?;
    write_json(&report.join(format!("rejected_{campaign}.json")), &out.rejected)?;
    write_json(&report.join(format!("qc_summary_{campaign}.json")), &out.summary)?;
    write_bytes(&report.join(format!("qc_summary_{campaign}.csv")), mmda_core::qc::summary_csv(&out.summary).as_bytes())?;
    for r in &out.summary {
        println!(
            "{}: {} workers, {} approved, {} pass QC ({:.2}%); {} translations, {} pass QC ({:.2}%)",
            r.condition,
            r.workers_total,
            r.workers_approved,
            r.workers_pass_qc,
            r.workers_pass_qc_pct,
            r.translations_total,
            r.translations_pass_qc,
            r.translations_pass_qc_pct
        );
    }
    if !out.rejected.is_empty() {
        println!("{} sessions rejected", out.rejected.len());
    }
    let files = ["kept", "reliability", "rejected", "qc_summary"]
        .iter()
        .map(|f| format!("report/{f}_{campaign}.{}", if *f == "kept" { "jsonl" } else { "json" }))
        .chain([format!("report/qc_summary_{campaign}.csv")])
        .collect::<Vec<_>>();
    let files: Vec<&str> = files.iter().map(String::as_str).collect();
    finish(s, &format!("filter/{campaign}"), &[], &files)
}

fn load_kept(wd: &Workdir, campaign: &str) -> CliResult<Vec<KeptJudgment>> {
    let path = wd.report().join(format!("kept_{campaign}.jsonl"));
    require(&path, "run `mmda filter` first")?;
    Ok(read_jsonl(&path)?)
}

fn known_systems(wd: &Workdir, campaign: &str) -> CliResult<BTreeSet<String>> {
    Ok(load_campaign_hits(wd, campaign)?
        .iter()
        .flat_map(|h| h.items.iter().filter(|i| i.kind == ItemKind::Genuine).map(|i| i.system_id.clone()))
        .collect())
}

fn scorecards(wd: &Workdir, campaign: &str, kept: &[KeptJudgment]) -> CliResult<Vec<SystemScorecard>> {
    Ok(system_scores(kept, &known_systems(wd, campaign)?)?)
}

pub fn rank(s: &Settings, campaign: &str) -> CliResult<()> {
    let wd = workdir(s);
    let kept = load_kept(&wd, campaign)?;
    if kept.is_empty() {
        return Err(Failure::validation(format!("no judgments in {campaign} survived quality control; nothing to rank")));
    }
    let cards = scorecards(&wd, campaign, &kept)?;
    write_bytes(&wd.report().join(format!("ranking_{campaign}.csv")), ranking_csv(&cards).as_bytes())?;
    println!("{:>4}  {:<24} {:>7} {:>7} {:>6}", "rank", "system", "z", "raw", "n");
    for c in &cards {
        println!("{:>4}  {:<24} {:>7.3} {:>7.2} {:>6}", c.rank, c.system_id, c.z_avg, c.raw_avg, c.n_judgments);
    }
    finish(s, &format!("rank/{campaign}"), &[], &[&format!("report/ranking_{campaign}.csv")])
}

fn matrix_for(kept: &[KeptJudgment], levels: &[f64]) -> CliResult<SignificanceMatrix> {
    Ok(significance_matrix(&z_pools(kept), levels)?)
}

pub fn sigtest(s: &Settings, campaign: &str, levels: Option<&[f64]>) -> CliResult<()> {
    let wd = workdir(s);
    let kept = load_kept(&wd, campaign)?;
    if kept.is_empty() {
        return Err(Failure::validation(format!("no judgments in {campaign} survived quality control")));
    }
    let m = matrix_for(&kept, levels.unwrap_or(&DEFAULT_LEVELS))?;
    let report = wd.report();
    let mut json = serde_json::to_vec_pretty(&matrix_json(&m, campaign)).expect("json value serializes");
    json.push(b'\n');
    write_bytes(&report.join(format!("sigmatrix_{campaign}.json")), &json)?;
    write_bytes(&report.join(format!("appendix_{campaign}.csv")), appendix_csv(&m).as_bytes())?;
    write_bytes(&report.join(format!("heatmap_{campaign}.csv")), heatmap_csv(&m).as_bytes())?;
    let significant = m.stars.iter().flatten().filter(|s| s.is_some_and(|n| n > 0)).count();
    println!("{} systems, {significant} of {} ordered pairs significant at p < {}", m.systems.len(), m.systems.len() * (m.systems.len() - 1), m.levels[0]);
    let files = ["sigmatrix", "appendix", "heatmap"]
        .iter()
        .map(|f| format!("report/{f}_{campaign}.{}", if *f == "sigmatrix" { "json" } else { "csv" }))
        .collect::<Vec<_>>();
    let files: Vec<&str> = files.iter().map(String::as_str).collect();
    finish(s, &format!("sigtest/{campaign}"), &[], &files)
}

fn load_ranking(wd: &Workdir, campaign: &str) -> CliResult<Vec<SystemScorecard>> {
    let path = wd.report().join(format!("ranking_{campaign}.csv"));
    require(&path, "run `mmda rank` first")?;
    Ok(parse_ranking_csv(&std::fs::read_to_string(&path)?)?)
}

pub fn replicate_compare(s: &Settings, a: &str, b: &str) -> CliResult<()> {
    let wd = workdir(s);
    let rep = replication_correlation(&load_ranking(&wd, a)?, &load_ranking(&wd, b)?)?;
    let mut json = serde_json::to_vec_pretty(&replication_json(Some(&rep))).expect("json value serializes");
    json.push(b'\n');
    write_bytes(&wd.report().join("replication.json"), &json)?;
    println!("{a} vs {b}: Pearson r = {:.4} over {} systems", rep.r, rep.points.len());
    finish(s, "replicate-compare", &[], &["report/replication.json"])
}

fn discover_campaigns(wd: &Workdir) -> CliResult<Vec<String>> {
    let mut out = Vec::new();
    if wd.report().exists() {
        for e in std::fs::read_dir(wd.report())? {
            let name = e?.file_name().to_string_lossy().into_owned();
            if let Some(c) = name.strip_prefix("kept_").and_then(|n| n.strip_suffix(".jsonl")) {
                out.push(c.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn report(s: &Settings, campaigns: &[String]) -> CliResult<()> {
    let wd = workdir(s);
    let campaigns = if campaigns.is_empty() { discover_campaigns(&wd)? } else { campaigns.to_vec() };
    if campaigns.is_empty() {
        return Err(Failure::validation("no filtered campaigns to report; run `mmda filter` first"));
    }
    let mut input = ReportInput::default();
    let mut summary: Vec<SummaryRow> = Vec::new();
    for c in &campaigns {
        let kept = load_kept(&wd, c)?;
        let cards = scorecards(&wd, c, &kept)?;
        let matrix = matrix_for(&kept, &DEFAULT_LEVELS).ok();
        input.conditions.push(ConditionReport { label: c.clone(), scorecards: cards, matrix });
        let spath = wd.report().join(format!("qc_summary_{c}.json"));
        if spath.exists() {
            summary.extend(read_json::<Vec<SummaryRow>>(&spath)?);
        }
    }
    if let [a, b] = input.conditions.as_slice() {
        if !a.scorecards.is_empty() && !b.scorecards.is_empty() {
            input.replication = replication_correlation(&a.scorecards, &b.scorecards).ok();
        }
    }
    input.qc_summary = Some(summary);
    let bundle = emit_report(&wd.report(), &input)?;
    println!("report for {} written to {}:", campaigns.join(", "), bundle.dir.display());
    for f in &bundle.files {
        println!("  {f}");
    }
    let files: Vec<String> = bundle.files.iter().map(|f| format!("report/{f}")).collect();
    let files: Vec<&str> = files.iter().map(String::as_str).collect();
    finish(s, "report", &[], &files)
}
