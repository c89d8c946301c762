use std::path::{Path, PathBuf};

use fleetgrid::agentsim::{simulate_reservations, write_sim_log, SimSettings};
use fleetgrid::corpus::{
    load_dataset, read_csv, read_home_locations, validate_scenario, write_csv, write_dataset,
    write_home_locations, Dataset, Gender, ScenarioConfig, DAY_MINUTES,
};
use fleetgrid::eventsim::{
    fit_event_distributions, read_booking_log, records_from_reservations, records_from_sample, sample_day,
    write_booking_log, BookingRecord, Calendar, EventDistributionSet,
};
use fleetgrid::metrics::{compare_bookings, write_report, write_zscores};
use fleetgrid::modechoice::{
    bayes_accuracy, evaluate_model, read_labeled, train_gbt, write_labeled, ChooserRegistry, GbtModel, GbtParams,
    LogitRule,
};
use fleetgrid::population::{PopulationStats, ReferencePerson};
use fleetgrid::rng::{derive_seed, stream};
use fleetgrid::scenario::{
    base_population, base_population_size, build_world, dso_load, grow_fleet, labeled_corpus, place_stations,
    run_scenario, sample_users, scale_config, world_grid, PresetRegistry, ScenarioRun, WorldSpec,
};
use fleetgrid::v2g::{
    build_availability, flexibility_envelope, peak_shave, tariff_profile, win_win_band, write_peaks, AdmmParams,
    Availability, BatteryParams, Money, PeakRow, DEFAULT_PEAK_COST_CHF_PER_MW, DEFAULT_TARIFF_CHF_PER_KWH,
};
use fleetgrid::{Error, Result};
use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::manifest::Manifest;
use crate::{Cli, Command, Status};

const MODEL_FILE: &str = "model.txt";
const LABELED_FILE: &str = "labeled.csv";
const HOMES_FILE: &str = "homes.csv";
const REFERENCE_FILE: &str = "reference_people.csv";
const BOOKINGS_FILE: &str = "bookings.csv";
const WEEK_DAYS: u32 = 7;
const EVENT_DAYS: u32 = 28;
const GBT_DEPTHS: [usize; 3] = [3, 4, 5];

struct Run<'a> {
    cli: &'a Cli,
    config: ScenarioConfig,
    seed: u64,
    inputs: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<Status> {
    if !(cli.scale > 0.0 && cli.scale <= 1.0) {
        return Err(Error::Config(format!("--scale must lie in (0, 1], got {}", cli.scale)));
    }
    let full = match &cli.config {
        Some(p) => ScenarioConfig::from_path(p)?,
        None => PresetRegistry::standard().get(cli.preset.unwrap_or(3))?.config(),
    };
    let mut config = validate_scenario(scale_config(&full, cli.scale))?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::Io { path: cli.out.clone(), source: e })?;
    let mut r = Run {
        cli,
        seed: config.seed,
        config,
        inputs: cli.config.iter().cloned().collect(),
    };
    info!("{} with seed {} at scale {}", cli.command.name(), r.seed, cli.scale);
    let status = match cli.command {
        Command::SynthPop => r.synth_pop()?,
        Command::SampleUsers => r.sample_users()?,
        Command::PlaceStations => r.place_stations()?,
        Command::ScaleFleet => r.scale_fleet()?,
        Command::TrainModechoice => r.train_modechoice()?,
        Command::SimulateAgent => r.simulate_agent()?,
        Command::FitEventsim => r.fit_eventsim()?,
        Command::SimulateEvent => r.simulate_event()?,
        Command::Validate => r.validate()?,
        Command::Scenario => r.scenario()?,
        Command::V2gEnvelope => r.v2g_envelope()?,
        Command::V2gPeakshave => r.v2g_peaks(false)?,
        Command::V2gMoney => r.v2g_peaks(true)?,
    };
    let mut manifest = Manifest::new(cli.command.name(), r.seed, cli.scale, cli.preset, r.config.clone());
    manifest.inputs(&r.inputs)?;
    manifest.write(&cli.out)?;
    Ok(status)
}

#[derive(Debug, Serialize, Deserialize)]
struct ReferenceRow {
    set: String,
    age_group: u8,
    gender: Gender,
    x: f64,
    y: f64,
}

#[derive(Debug, Serialize)]
struct ObjectiveRow {
    iteration: usize,
    objective: f64,
}

#[derive(Debug, Serialize)]
struct PlanRow {
    station_id: u32,
    multiplier: f64,
    current: usize,
    planned: usize,
}

#[derive(Debug, Serialize)]
struct TrainingReport {
    samples: usize,
    test_samples: usize,
    depth_scores: Vec<(usize, f64)>,
    best_depth: usize,
    test_accuracy: f64,
    test_balanced_accuracy: f64,
    rule_bayes_accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    run: String,
    name: String,
    users: usize,
    vehicles: usize,
    stations: usize,
    trips: usize,
    reservations: usize,
    count_rate: f64,
    time_rate: f64,
    station_rate: f64,
    mean_origin_station_distance_m: f64,
    carsharing_share: f64,
    forced_returns: usize,
}

#[derive(Debug, Serialize)]
struct MoneyReport {
    peak_cost_chf_per_mw: f64,
    reimburse_grid_tariff: bool,
    win_win_prices: Vec<f64>,
    rows: Vec<Money>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.to_path_buf(), source: e }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

fn write_reference(path: &Path, u: &[ReferencePerson], q: &[ReferencePerson]) -> Result<()> {
    let rows: Vec<ReferenceRow> = u
        .iter()
        .map(|p| ("U", p))
        .chain(q.iter().map(|p| ("Q", p)))
        .map(|(set, p)| ReferenceRow {
            set: set.to_string(),
            age_group: p.age_group,
            gender: p.gender,
            x: p.x,
            y: p.y,
        })
        .collect();
    write_csv(path, &rows, &["set", "age_group", "gender", "x", "y"])
}

fn read_reference(path: &Path) -> Result<(Vec<ReferencePerson>, Vec<ReferencePerson>)> {
    let rows: Vec<ReferenceRow> = read_csv(path)?.ok_or_else(|| missing(path))?;
    let (mut u, mut q) = (Vec::new(), Vec::new());
    for r in rows {
        let p = ReferencePerson {
            age_group: r.age_group,
            gender: r.gender,
            x: r.x,
            y: r.y,
        };
        match r.set.as_str() {
            "U" => u.push(p),
            "Q" => q.push(p),
            other => return Err(Error::InvalidInput(format!("{}: unknown set `{other}`", path.display()))),
        }
    }
    Ok((u, q))
}

fn missing(path: &Path) -> Error {
    Error::InvalidInput(format!("missing input {}", path.display()))
}

fn price_label(p: f64) -> String {
    format!("{p}")
}

impl Run<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cli.out.join(name)
    }

    fn input_dir(&self) -> Result<PathBuf> {
        self.cli
            .input
            .clone()
            .ok_or_else(|| Error::InvalidInput(format!("{} needs --in <dir>", self.cli.command.name())))
    }

    /// Path of a required input file, recorded in the manifest.
    fn require(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.input_dir()?.join(name);
        if !p.is_file() {
            return Err(Error::InvalidInput(format!(
                "missing input {} (required by {})",
                p.display(),
                self.cli.command.name()
            )));
        }
        self.inputs.push(p.clone());
        Ok(p)
    }

    /// Path of an optional input file, recorded when present.
    fn optional(&mut self, name: &str) -> Option<PathBuf> {
        let p = self.cli.input.as_ref()?.join(name);
        if p.is_file() {
            self.inputs.push(p.clone());
            Some(p)
        } else {
            None
        }
    }

    /// Loads the corpus files of `--in`, requiring the named ones.
    fn dataset(&mut self, required: &[&str]) -> Result<Dataset> {
        for name in required {
            self.require(name)?;
        }
        for name in ["stations.csv", "vehicles.csv", "agents.csv", "trips.csv", "reservations.csv", "dso_load.csv"] {
            if !required.contains(&name) {
                self.optional(name);
            }
        }
        load_dataset(&self.input_dir()?)
    }

    /// Copies pass-through files from `--in` when present.
    fn carry(&mut self, names: &[&str]) -> Result<()> {
        for name in names {
            if let Some(p) = self.optional(name) {
                let dst = self.out(name);
                std::fs::copy(&p, &dst).map_err(io_err(&dst))?;
            }
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (DAY_MINUTES / self.config.timestep_minutes() as i64) as usize
    }

    fn chooser_registry(&mut self) -> Result<ChooserRegistry> {
        let model = match self.optional(MODEL_FILE) {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(io_err(&p))?;
                Some(GbtModel::from_text(&text)?)
            }
            None => None,
        };
        Ok(ChooserRegistry::standard(model))
    }

    fn chooser_name(&self, has_model: bool) -> String {
        self.cli.chooser.clone().unwrap_or_else(|| {
            if has_model {
                "gbt-categorical".into()
            } else {
                "rule-categorical".into()
            }
        })
    }

    fn synth_pop(&mut self) -> Result<Status> {
        let world = build_world(&WorldSpec::default(), self.cli.scale, self.seed)?;
        let n = base_population_size(&world, self.config.n_users as usize);
        let (agents, trips) = base_population(&world, n, self.seed)?;
        let ds = Dataset {
            stations: world.stations.clone(),
            vehicles: world.vehicles.clone(),
            agents,
            trips,
            reservations: Vec::new(),
            dso_load: dso_load(&world.spec, self.cli.scale, self.steps()),
        };
        write_dataset(&self.cli.out, &ds)?;
        write_home_locations(&self.out(HOMES_FILE), &world.homes)?;
        write_reference(&self.out(REFERENCE_FILE), &world.u_real, &world.q_real)?;
        PopulationStats::from_reference(&world.u_real, &world.q_real, &world.stations)?
            .write(&self.out("population_stats.csv"))?;
        Ok(Status::Done)
    }

    fn sample_users(&mut self) -> Result<Status> {
        let mut ds = self.dataset(&["stations.csv", "agents.csv", "trips.csv"])?;
        let (u, q) = read_reference(&self.require(REFERENCE_FILE)?)?;
        let (users, trips) = sample_users(&ds.agents, &ds.trips, &ds.stations, &u, &q, self.config.n_users as usize, self.seed)?;
        ds.agents = users;
        ds.trips = trips;
        ds.reservations.clear();
        write_dataset(&self.cli.out, &ds)?;
        PopulationStats::from_reference(&u, &q, &ds.stations)?.write(&self.out("population_stats.csv"))?;
        self.carry(&[HOMES_FILE, REFERENCE_FILE])?;
        Ok(Status::Done)
    }

    fn place_stations(&mut self) -> Result<Status> {
        let mut ds = self.dataset(&["stations.csv"])?;
        let homes = read_home_locations(&self.require(HOMES_FILE)?)?;
        let (stations, placement) = place_stations(&ds.stations, &homes, self.config.k_new_stations as usize, self.seed)?;
        ds.stations = stations;
        ds.link_vehicles();
        write_dataset(&self.cli.out, &ds)?;
        let rows: Vec<ObjectiveRow> = placement
            .objective
            .iter()
            .enumerate()
            .map(|(i, &objective)| ObjectiveRow { iteration: i + 1, objective })
            .collect();
        write_csv(&self.out("placement.csv"), &rows, &["iteration", "objective"])?;
        self.carry(&[HOMES_FILE, REFERENCE_FILE])?;
        if !placement.converged {
            return Ok(Status::NotConverged(format!("station placement after {} iterations", placement.iterations)));
        }
        Ok(Status::Done)
    }

    fn scale_fleet(&mut self) -> Result<Status> {
        let mut ds = self.dataset(&["stations.csv", "vehicles.csv"])?;
        let (vehicles, plan) = grow_fleet(&ds.vehicles, &ds.stations, &self.config, self.seed)?;
        if !ds.reservations.is_empty() {
            warn!("dropping {} reservations of the previous fleet", ds.reservations.len());
            ds.reservations.clear();
        }
        ds.vehicles = vehicles;
        ds.link_vehicles();
        write_dataset(&self.cli.out, &ds)?;
        let rows: Vec<PlanRow> = plan
            .stations
            .iter()
            .map(|&(station_id, multiplier, current, planned)| PlanRow {
                station_id,
                multiplier,
                current,
                planned,
            })
            .collect();
        write_csv(&self.out("fleet_plan.csv"), &rows, &["station_id", "multiplier", "current", "planned"])?;
        self.carry(&[HOMES_FILE, REFERENCE_FILE])?;
        Ok(Status::Done)
    }

    fn train_modechoice(&mut self) -> Result<Status> {
        let rule = LogitRule::default();
        let (x, y, generated) = match self.optional(LABELED_FILE) {
            Some(p) => {
                let (x, y) = read_labeled(&p)?;
                (x, y, false)
            }
            None => {
                let world = build_world(&WorldSpec::default(), self.cli.scale, self.seed)?;
                let (x, y) = labeled_corpus(&world, self.config.n_users as usize, &rule, self.seed)?;
                write_labeled(&self.out(LABELED_FILE), &x, &y)?;
                (x, y, true)
            }
        };
        let labels: Vec<u32> = y.iter().map(|m| m.index() as u32).collect();
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut stream(self.seed, "modechoice-test-split"));
        let n_test = x.len() / 5;
        let (test, train) = idx.split_at(n_test);
        let xt: Vec<&[f64]> = train.iter().map(|&i| &x[i][..]).collect();
        let yt: Vec<u32> = train.iter().map(|&i| labels[i]).collect();
        let (model, grid) = train_gbt(&xt, &yt, &GBT_DEPTHS, 0.2, derive_seed(self.seed, "gbt"), &GbtParams::default())?;
        let xs: Vec<&[f64]> = test.iter().map(|&i| &x[i][..]).collect();
        let ys: Vec<u32> = test.iter().map(|&i| labels[i]).collect();
        let eval = evaluate_model(&model, &xs, &ys)?;
        let model_path = self.out(MODEL_FILE);
        std::fs::write(&model_path, model.to_text()).map_err(io_err(&model_path))?;
        self.carry(&["stations.csv", "vehicles.csv", "agents.csv", "trips.csv", "dso_load.csv"])?;
        write_json(&self.out("evaluation.json"), &eval)?;
        write_json(
            &self.out("training.json"),
            &TrainingReport {
                samples: x.len(),
                test_samples: xs.len(),
                depth_scores: grid.scores.clone(),
                best_depth: grid.best_depth,
                test_accuracy: eval.accuracy,
                test_balanced_accuracy: eval.balanced_accuracy,
                rule_bayes_accuracy: generated.then(|| bayes_accuracy(&rule, &xs)),
            },
        )?;
        Ok(Status::Done)
    }

    fn simulate_agent(&mut self) -> Result<Status> {
        let mut ds = self.dataset(&["stations.csv", "vehicles.csv", "agents.csv", "trips.csv"])?;
        let registry = self.chooser_registry()?;
        let name = self.chooser_name(self.inputs.iter().any(|p| p.ends_with(MODEL_FILE)));
        let chooser = registry.get(&name)?;
        let grid = world_grid(&WorldSpec::default(), self.cli.scale);
        let main_day = SimSettings::default().weekday;
        let mut bookings = Vec::new();
        for day in 0..WEEK_DAYS {
            let settings = SimSettings { weekday: day as u8 };
            let sim = simulate_reservations(
                &ds.trips,
                &ds.agents,
                &ds.stations,
                &ds.vehicles,
                chooser,
                &grid,
                settings,
                derive_seed(self.seed, &format!("simulate-day-{day}")),
            )?;
            bookings.extend(records_from_reservations(&sim.reservations, day, day >= 5));
            if day as u8 == main_day {
                write_sim_log(&self.out("sim_log.csv"), &sim.log)?;
                ds.reservations = sim.reservations;
            }
        }
        if ds.dso_load.is_empty() {
            ds.dso_load = dso_load(&WorldSpec::default(), self.cli.scale, self.steps());
        }
        write_dataset(&self.cli.out, &ds)?;
        write_booking_log(&self.out(BOOKINGS_FILE), &bookings)?;
        Ok(Status::Done)
    }

    fn fit_eventsim(&mut self) -> Result<Status> {
        let records = read_booking_log(&self.require(BOOKINGS_FILE)?)?;
        let stations: Vec<u32> = match self.optional("stations.csv") {
            Some(_) => load_dataset(&self.input_dir()?)?.stations.iter().map(|s| s.station_id).collect(),
            None => Vec::new(),
        };
        let set = fit_event_distributions(&records, Calendar::from_records(&records), &stations)?;
        set.write(&self.out("distributions.csv"), &self.out("station_probs.csv"))?;
        Ok(Status::Done)
    }

    fn simulate_event(&mut self) -> Result<Status> {
        let d = self.require("distributions.csv")?;
        let p = self.require("station_probs.csv")?;
        let set = EventDistributionSet::read(&d, &p)?;
        let mut records = Vec::new();
        for day in 0..EVENT_DAYS {
            let weekend = day % 7 >= 5;
            let sample = sample_day(&set, weekend, derive_seed(self.seed, &format!("event-day-{day}")))?;
            records.extend(records_from_sample(day, weekend, &sample));
        }
        write_booking_log(&self.out(BOOKINGS_FILE), &records)?;
        Ok(Status::Done)
    }

    fn bookings_in(&mut self, dir: &Path) -> Result<Vec<BookingRecord>> {
        let log = dir.join(BOOKINGS_FILE);
        if log.is_file() {
            self.inputs.push(log.clone());
            return read_booking_log(&log);
        }
        let res = dir.join("reservations.csv");
        if res.is_file() {
            self.inputs.push(res.clone());
            let ds = load_dataset(dir)?;
            return Ok(records_from_reservations(&ds.reservations, 0, false));
        }
        Err(Error::InvalidInput(format!(
            "missing input {} or {}",
            log.display(),
            res.display()
        )))
    }

    fn validate(&mut self) -> Result<Status> {
        let sim_dir = self.input_dir()?;
        let ref_dir = self
            .cli
            .reference
            .clone()
            .ok_or_else(|| Error::InvalidInput("validate needs --reference <dir>".into()))?;
        let sim = self.bookings_in(&sim_dir)?;
        let reference = self.bookings_in(&ref_dir)?;
        let (report, z) = compare_bookings(&sim, &reference)?;
        write_report(&self.out("report.json"), &report)?;
        write_zscores(&self.out("zscores.csv"), &z)?;
        Ok(Status::Done)
    }

    fn scenario(&mut self) -> Result<Status> {
        let registry = PresetRegistry::standard();
        let mut runs: Vec<(String, String, ScenarioConfig)> = Vec::new();
        let ids = match (self.cli.preset, &self.cli.config) {
            (Some(id), _) => vec![id],
            (None, Some(_)) => Vec::new(),
            (None, None) => registry.ids(),
        };
        if ids.is_empty() {
            runs.push(("custom".into(), "custom".into(), self.config.clone()));
        }
        for id in ids {
            let p = registry.get(id)?;
            let mut c = validate_scenario(scale_config(&p.config(), self.cli.scale))?;
            c.seed = self.seed;
            runs.push((format!("preset-{id}"), p.name().to_string(), c));
        }
        let world = build_world(&WorldSpec::default(), self.cli.scale, self.seed)?;
        let choosers = self.chooser_registry()?;
        let name = self.chooser_name(self.inputs.iter().any(|p| p.ends_with(MODEL_FILE)));
        let chooser = choosers.get(&name)?;
        let jobs = self.cli.jobs.clamp(1, runs.len());
        let mut results: Vec<Option<Result<ScenarioRun>>> = (0..runs.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|j| {
                    let (runs, world, seed) = (&runs, &world, self.seed);
                    scope.spawn(move || {
                        (j..runs.len())
                            .step_by(jobs)
                            .map(|i| (i, run_scenario(world, &runs[i].2, chooser, seed)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("scenario worker panicked") {
                    results[i] = Some(r);
                }
            }
        });
        let mut rows = Vec::new();
        for ((label, name, _), r) in runs.iter().zip(results) {
            let run = r.expect("every run computed")?;
            let dir = self.out(label);
            let ds = Dataset {
                stations: run.stations,
                vehicles: run.vehicles,
                agents: run.users,
                trips: run.trips,
                reservations: run.reservations,
                dso_load: run.dso_load,
            };
            write_dataset(&dir, &ds)?;
            write_sim_log(&dir.join("sim_log.csv"), &run.log)?;
            write_json(&dir.join("summary.json"), &run.summary)?;
            let s = run.summary;
            rows.push(SummaryRow {
                run: label.clone(),
                name: name.clone(),
                users: s.users,
                vehicles: s.vehicles,
                stations: s.stations,
                trips: s.trips,
                reservations: s.reservations,
                count_rate: s.count_rate,
                time_rate: s.time_rate,
                station_rate: s.station_rate,
                mean_origin_station_distance_m: s.mean_origin_station_distance_m,
                carsharing_share: s.carsharing_share,
                forced_returns: s.forced_returns,
            });
        }
        write_csv(
            &self.out("scenarios.csv"),
            &rows,
            &[
                "run",
                "name",
                "users",
                "vehicles",
                "stations",
                "trips",
                "reservations",
                "count_rate",
                "time_rate",
                "station_rate",
                "mean_origin_station_distance_m",
                "carsharing_share",
                "forced_returns",
            ],
        )?;
        Ok(Status::Done)
    }

    fn battery(&self) -> BatteryParams {
        BatteryParams {
            timestep_minutes: self.config.timestep_minutes(),
            ..BatteryParams::default()
        }
    }

    fn tariff(&self) -> Vec<f64> {
        tariff_profile(
            self.config.energy_tariff_chf_per_kwh.unwrap_or(DEFAULT_TARIFF_CHF_PER_KWH),
            self.config.timestep_minutes(),
        )
    }

    fn availability(&mut self, ds: &Dataset, params: &BatteryParams) -> Result<Availability> {
        let avail = build_availability(&ds.reservations, &ds.vehicles, params)?;
        for inf in &avail.infeasible {
            warn!("vehicle {} left out: {}", inf.vehicle_id, inf.message);
        }
        Ok(avail)
    }

    fn admm(&self) -> AdmmParams {
        AdmmParams {
            jobs: self.cli.jobs.max(1),
            ..AdmmParams::default()
        }
    }

    fn v2g_envelope(&mut self) -> Result<Status> {
        let ds = self.dataset(&["vehicles.csv", "reservations.csv"])?;
        let params = self.battery();
        let avail = self.availability(&ds, &params)?;
        let env = flexibility_envelope(&avail, &params, &self.tariff(), self.config.price_levels(), &self.admm())?;
        env.write(&self.out("envelope.csv"))?;
        env.baseline.write(&self.out("schedule.csv"))?;
        if !env.baseline.converged {
            return Ok(Status::NotConverged("baseline schedule".into()));
        }
        Ok(Status::Done)
    }

    fn v2g_peaks(&mut self, money: bool) -> Result<Status> {
        let ds = self.dataset(&["vehicles.csv", "reservations.csv", "dso_load.csv"])?;
        let params = self.battery();
        let avail = zone_fleet(&ds, self.availability(&ds, &params)?);
        let tariff = self.tariff();
        let peak_cost = self.config.peak_cost_chf_per_mw.unwrap_or(DEFAULT_PEAK_COST_CHF_PER_MW);
        let reimburse = self.config.reimburse_grid_tariff;
        let label = self
            .input_dir()?
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "fleet".into());
        let admm = self.admm();
        let mut rows = Vec::new();
        let mut monies = Vec::new();
        let mut unconverged = Vec::new();
        for &price in self.config.price_levels() {
            let r = peak_shave(&avail, &params, &tariff, &ds.dso_load, price, &admm)?;
            let m = r.money(peak_cost, &tariff, params.dt_hours(), reimburse)?;
            if !r.schedule.converged {
                unconverged.push(price_label(price));
            }
            if !money {
                let dir = self.out("schedules");
                std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
                if rows.is_empty() {
                    r.baseline.write(&self.out("schedule.csv"))?;
                }
                r.schedule.write(&dir.join(format!("price-{}.csv", price_label(price))))?;
            }
            rows.push(PeakRow::new(&label, &r, &m));
            monies.push(m);
        }
        write_peaks(&self.out("peaks.csv"), &rows)?;
        if money {
            write_json(
                &self.out("money.json"),
                &MoneyReport {
                    peak_cost_chf_per_mw: peak_cost,
                    reimburse_grid_tariff: reimburse,
                    win_win_prices: win_win_band(&rows),
                    rows: monies,
                },
            )?;
        }
        if !unconverged.is_empty() {
            return Ok(Status::NotConverged(format!("peak shaving at prices {}", unconverged.join(", "))));
        }
        Ok(Status::Done)
    }
}

/// Vehicles homed inside the DSO grid zone. A dataset without zone ids is
/// taken as one zone.
fn zone_fleet(ds: &Dataset, avail: Availability) -> Availability {
    let zoned: std::collections::HashSet<u32> =
        ds.stations.iter().filter(|s| s.grid_zone_id.is_some()).map(|s| s.station_id).collect();
    if zoned.is_empty() {
        return avail;
    }
    let kept = avail.subset(|v| zoned.contains(&v.station_id));
    info!("{} of {} vehicles are homed in the grid zone", kept.vehicles.len(), avail.vehicles.len());
    kept
}
