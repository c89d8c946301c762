use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{validate_reservations, Agent, Dataset, Reservation, Station, Trip, Vehicle};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct StationRow {
    station_id: u32,
    x: f64,
    y: f64,
    grid_zone_id: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LoadRow {
    timestep_index: usize,
    load_mw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct HomeRow {
    x: f64,
    y: f64,
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Reads every row of a headered CSV file. Returns `Ok(None)` when the file does not exist.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Option<Vec<T>>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let label = file_label(path);
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(&label, &csv::StringRecord::new(), e))?
        .clone();
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec.map_err(|e| csv_error(&label, &headers, e))?);
    }
    Ok(Some(rows))
}

fn csv_error(file: &str, headers: &csv::StringRecord, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => {
            let column = err
                .field()
                .and_then(|i| headers.get(i as usize))
                .unwrap_or("?")
                .to_string();
            Error::Parse {
                file: file.to_string(),
                line,
                column,
                message: err.kind().to_string(),
            }
        }
        _ => Error::Parse {
            file: file.to_string(),
            line,
            column: "?".into(),
            message: e.to_string(),
        },
    }
}

/// Writes rows with a header line. An empty slice still produces the header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        w.write_record(header).map_err(|e| Error::InvalidInput(e.to_string()))?;
        for row in rows {
            w.serialize(row).map_err(|e| Error::InvalidInput(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

const STATION_HEADER: [&str; 4] = ["station_id", "x", "y", "grid_zone_id"];
const VEHICLE_HEADER: [&str; 9] = [
    "vehicle_id",
    "station_id",
    "category",
    "battery_kwh",
    "max_charge_kw",
    "max_discharge_kw",
    "consumption_kwh_per_km",
    "soc_min",
    "soc_max",
];
const AGENT_HEADER: [&str; 7] = [
    "agent_id",
    "age_group",
    "gender",
    "home_x",
    "home_y",
    "car_access",
    "pt_subscription",
];
const TRIP_HEADER: [&str; 10] = [
    "trip_id",
    "agent_id",
    "origin_x",
    "origin_y",
    "dest_x",
    "dest_y",
    "purpose_origin",
    "purpose_dest",
    "t_dest_start",
    "distance_m",
];
const RESERVATION_HEADER: [&str; 8] = [
    "reservation_id",
    "vehicle_id",
    "agent_id",
    "station_id",
    "t_start",
    "t_end",
    "drive_km",
    "forced_return",
];

pub fn read_reservations(path: &Path) -> Result<Vec<Reservation>> {
    let rows: Vec<Reservation> = read_csv(path)?.unwrap_or_default();
    validate_reservations(&rows)?;
    Ok(rows)
}

pub fn write_reservations(path: &Path, rows: &[Reservation]) -> Result<()> {
    validate_reservations(rows)?;
    write_csv(path, rows, &RESERVATION_HEADER)
}

pub fn read_dso_load(path: &Path) -> Result<Vec<f64>> {
    let rows: Vec<LoadRow> = read_csv(path)?.unwrap_or_default();
    for (i, r) in rows.iter().enumerate() {
        if r.timestep_index != i {
            return Err(Error::Parse {
                file: file_label(path),
                line: i as u64 + 2,
                column: "timestep_index".into(),
                message: format!("expected {i}, got {}", r.timestep_index),
            });
        }
    }
    Ok(rows.into_iter().map(|r| r.load_mw).collect())
}

pub fn write_dso_load(path: &Path, load_mw: &[f64]) -> Result<()> {
    let rows: Vec<LoadRow> = load_mw
        .iter()
        .enumerate()
        .map(|(timestep_index, &load_mw)| LoadRow { timestep_index, load_mw })
        .collect();
    write_csv(path, &rows, &["timestep_index", "load_mw"])
}

pub fn read_home_locations(path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<HomeRow> = read_csv(path)?
        .ok_or_else(|| Error::InvalidInput(format!("missing input {}", path.display())))?;
    Ok(rows.into_iter().map(|r| (r.x, r.y)).collect())
}

pub fn write_home_locations(path: &Path, homes: &[(f64, f64)]) -> Result<()> {
    let rows: Vec<HomeRow> = homes.iter().map(|&(x, y)| HomeRow { x, y }).collect();
    write_csv(path, &rows, &["x", "y"])
}

/// Loads the six corpus files from `dir`. Missing files give empty collections.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let stations: Vec<StationRow> = read_csv(&dir.join("stations.csv"))?.unwrap_or_default();
    let mut ds = Dataset {
        stations: stations
            .into_iter()
            .map(|r| Station {
                station_id: r.station_id,
                x: r.x,
                y: r.y,
                vehicle_ids: Vec::new(),
                grid_zone_id: r.grid_zone_id,
            })
            .collect(),
        vehicles: read_csv::<Vehicle>(&dir.join("vehicles.csv"))?.unwrap_or_default(),
        agents: read_csv::<Agent>(&dir.join("agents.csv"))?.unwrap_or_default(),
        trips: read_csv::<Trip>(&dir.join("trips.csv"))?.unwrap_or_default(),
        reservations: read_csv::<Reservation>(&dir.join("reservations.csv"))?.unwrap_or_default(),
        dso_load: read_dso_load(&dir.join("dso_load.csv"))?,
    };
    ds.link_vehicles();
    ds.validate()?;
    Ok(ds)
}

/// Validates and writes all six corpus files, creating `dir` if needed.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    ds.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let stations: Vec<StationRow> = ds
        .stations
        .iter()
        .map(|s| StationRow {
            station_id: s.station_id,
            x: s.x,
            y: s.y,
            grid_zone_id: s.grid_zone_id,
        })
        .collect();
    write_csv(&dir.join("stations.csv"), &stations, &STATION_HEADER)?;
    write_csv(&dir.join("vehicles.csv"), &ds.vehicles, &VEHICLE_HEADER)?;
    write_csv(&dir.join("agents.csv"), &ds.agents, &AGENT_HEADER)?;
    write_csv(&dir.join("trips.csv"), &ds.trips, &TRIP_HEADER)?;
    write_csv(&dir.join("reservations.csv"), &ds.reservations, &RESERVATION_HEADER)?;
    write_dso_load(&dir.join("dso_load.csv"), &ds.dso_load)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_trips_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("trips.csv"), TRIP_HEADER.join(",") + "\n").unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert!(ds.trips.is_empty());
    }

    #[test]
    fn parse_error_names_file_line_column() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("stations.csv"),
            "station_id,x,y,grid_zone_id\n1,0,0,\n2,abc,0,\n",
        )
        .unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("stations.csv:3"), "{err}");
        assert!(err.contains("`x`"), "{err}");
    }

    #[test]
    fn reservations_without_flag_column_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("reservations.csv"),
            "reservation_id,vehicle_id,agent_id,station_id,t_start,t_end,drive_km\n1,2,3,4,10,20,1.5\n",
        )
        .unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.reservations.len(), 1);
        assert!(!ds.reservations[0].forced_return);
    }

    #[test]
    fn duplicate_vehicle_id_is_named() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("stations.csv"), "station_id,x,y,grid_zone_id\n1,0,0,\n2,5,5,7\n").unwrap();
        let row = |id: u32, st: u32| format!("{id},{st},Budget,40,11,11,0.2,0.1,0.95\n");
        let body = VEHICLE_HEADER.join(",") + "\n" + &row(1, 1) + &row(9, 1) + &row(9, 2);
        std::fs::write(dir.path().join("vehicles.csv"), body).unwrap();
        let err = load_dataset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("vehicle 9"), "{err}");
    }
}
