//! CSV files for references, gain schedules, simulation series and pole
//! traces.
//!
//! Numbers are written in scientific notation with 17 significant digits,
//! which reproduces every `f64` exactly when read back. Readers check the
//! header and report problems with the file name and the 1-based line.

use std::io::{Read, Write};
use std::path::Path;

use crate::control::{Gain, GainKnot, GainSchedule};
use crate::error::{Error, Result};
use crate::model::{ControlInput, VehicleState};
use crate::reference::{Reference, ReferencePoint};
use crate::sim::{PoleSet, SimResult};

pub const TRAJECTORY_HEADER: [&str; 17] = [
    "s", "t", "kappa", "Vx", "Vy", "r", "omega", "dFz", "theta_r", "e", "dpsi", "psi", "X", "Y", "delta", "Fxf", "tau",
];

pub const SIM_COLUMNS: [&str; 14] = [
    "t", "s", "e", "dpsi", "Vx", "Vy", "r", "omega", "dFz", "theta_r", "mu_r", "delta", "Fxf", "tau",
];

const STATE_COLUMNS: [&str; 12] = [
    "Vx", "Vy", "r", "omega", "dFz", "theta_r", "e", "s", "dpsi", "psi", "X", "Y",
];

/// Full-precision decimal form of `v`.
pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn gains_header() -> Vec<String> {
    let mut h = vec!["s".to_string()];
    for i in 1..=3 {
        for j in 1..=6 {
            h.push(format!("k{i}{j}"));
        }
    }
    h.extend(STATE_COLUMNS.iter().map(|c| format!("ref_{c}")));
    h.extend(["ref_delta", "ref_Fxf", "ref_tau"].map(String::from));
    h
}

pub fn sim_header() -> Vec<String> {
    let mut h: Vec<String> = SIM_COLUMNS.iter().map(|c| c.to_string()).collect();
    h.extend(SIM_COLUMNS.iter().map(|c| format!("ref_{c}")));
    h
}

pub fn poles_header() -> Vec<String> {
    let mut h = vec!["s".to_string()];
    for j in 1..=6 {
        h.push(format!("re{j}"));
        h.push(format!("im{j}"));
    }
    h
}

fn io_err(file: &str, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{file}: {e}"))
}

fn write_rows<W: Write, H: AsRef<str>>(out: W, file: &str, header: &[H], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header.iter().map(|h| h.as_ref())).map_err(|e| io_err(file, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt(*v))).map_err(|e| io_err(file, e))?;
    }
    w.flush().map_err(|e| io_err(file, e))
}

/// Parses all data rows, checking the header and the field count.
fn read_rows<R: Read, H: AsRef<str>>(input: R, file: &str, header: &[H]) -> Result<Vec<Vec<f64>>> {
    let csv_err = |row: usize, msg: String| Error::Csv {
        file: file.to_string(),
        row,
        msg,
    };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found = r.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    let expected: Vec<&str> = header.iter().map(|h| h.as_ref()).collect();
    if found.iter().collect::<Vec<_>>() != expected {
        return Err(csv_err(1, format!("expected header `{}`", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| csv_err(line, e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(csv_err(line, format!("expected {} fields, found {}", expected.len(), rec.len())));
        }
        let row = rec
            .iter()
            .zip(&expected)
            .map(|(field, name)| {
                field
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| csv_err(line, format!("column `{name}`: cannot parse `{field}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn state_values(s: &VehicleState) -> [f64; 12] {
    s.to_vector().into()
}

fn state_from(values: &[f64]) -> VehicleState {
    VehicleState::from_vector(&nalgebra::SVector::from_column_slice(values))
}

fn trajectory_row(p: &ReferencePoint) -> Vec<f64> {
    let st = &p.state;
    vec![
        p.s,
        p.time,
        p.curvature,
        st.vx,
        st.vy,
        st.yaw_rate,
        st.wheel_speed,
        st.weight_transfer,
        st.temperature,
        st.lateral_error,
        st.heading_error,
        st.heading,
        st.x,
        st.y,
        p.input.steer,
        p.input.front_brake,
        p.input.torque,
    ]
}

pub fn write_trajectory<W: Write>(out: W, reference: &Reference) -> Result<()> {
    write_rows(out, "trajectory.csv", &TRAJECTORY_HEADER, reference.points.iter().map(trajectory_row))
}

/// Reads the points of a reference. Arc length must increase strictly.
/// Transition spans are not part of the file.
pub fn read_trajectory<R: Read>(input: R, file: &str) -> Result<Reference> {
    let rows = read_rows(input, file, &TRAJECTORY_HEADER)?;
    let mut points: Vec<ReferencePoint> = Vec::with_capacity(rows.len());
    for (k, v) in rows.iter().enumerate() {
        if let Some(prev) = points.last() {
            if !(v[0] > prev.s) {
                return Err(Error::Csv {
                    file: file.to_string(),
                    row: k + 2,
                    msg: format!("arc length {} does not increase", v[0]),
                });
            }
        }
        points.push(ReferencePoint {
            s: v[0],
            time: v[1],
            curvature: v[2],
            state: VehicleState {
                vx: v[3],
                vy: v[4],
                yaw_rate: v[5],
                wheel_speed: v[6],
                weight_transfer: v[7],
                temperature: v[8],
                lateral_error: v[9],
                arc_length: v[0],
                heading_error: v[10],
                heading: v[11],
                x: v[12],
                y: v[13],
            },
            input: ControlInput::new(v[14], v[15], v[16]),
        });
    }
    if points.is_empty() {
        return Err(Error::Csv {
            file: file.to_string(),
            row: 2,
            msg: "no data rows".into(),
        });
    }
    Ok(Reference {
        points,
        transitions: Vec::new(),
    })
}

pub fn write_gains<W: Write>(out: W, schedule: &GainSchedule) -> Result<()> {
    let rows = schedule.knots.iter().map(|k| {
        let mut row = vec![k.s];
        for i in 0..3 {
            for j in 0..6 {
                row.push(k.gain[(i, j)]);
            }
        }
        row.extend(state_values(&k.state));
        row.extend(k.input.to_array());
        row
    });
    write_rows(out, "gains.csv", &gains_header(), rows)
}

pub fn read_gains<R: Read>(input: R, file: &str) -> Result<GainSchedule> {
    let rows = read_rows(input, file, &gains_header())?;
    let knots = rows
        .iter()
        .map(|v| GainKnot {
            s: v[0],
            gain: Gain::from_row_slice(&v[1..19]),
            state: state_from(&v[19..31]),
            input: ControlInput::new(v[31], v[32], v[33]),
        })
        .collect();
    GainSchedule::new(knots).map_err(|e| Error::Csv {
        file: file.to_string(),
        row: 0,
        msg: e.to_string(),
    })
}

fn sim_values(t: f64, st: &VehicleState, mu: f64, u: &ControlInput) -> [f64; 14] {
    [
        t,
        st.arc_length,
        st.lateral_error,
        st.heading_error,
        st.vx,
        st.vy,
        st.yaw_rate,
        st.wheel_speed,
        st.weight_transfer,
        st.temperature,
        mu,
        u.steer,
        u.front_brake,
        u.torque,
    ]
}

pub fn write_sim<W: Write>(out: W, result: &SimResult) -> Result<()> {
    let rows = result.samples.iter().map(|p| {
        let mut row = sim_values(p.time, &p.state, p.mu_r, &p.input).to_vec();
        let r = &p.reference;
        row.extend(sim_values(r.time, &r.state, p.reference_mu, &r.input));
        row
    });
    write_rows(out, &format!("sim_{}.csv", result.name), &sim_header(), rows)
}

/// Reads the recorded series back as rows in [`sim_header`] order.
pub fn read_sim<R: Read>(input: R, file: &str) -> Result<Vec<Vec<f64>>> {
    read_rows(input, file, &sim_header())
}

pub fn write_poles<W: Write>(out: W, name: &str, sets: &[PoleSet]) -> Result<()> {
    let rows = sets.iter().map(|p| {
        let mut row = vec![p.s];
        for z in &p.poles {
            row.push(z.re);
            row.push(z.im);
        }
        row
    });
    write_rows(out, &format!("poles_{name}.csv"), &poles_header(), rows)
}

pub fn read_poles<R: Read>(input: R, file: &str) -> Result<Vec<PoleSet>> {
    let rows = read_rows(input, file, &poles_header())?;
    Ok(rows
        .iter()
        .map(|v| {
            let mut poles = [nalgebra::Complex::new(0.0, 0.0); 6];
            for (j, z) in poles.iter_mut().enumerate() {
                *z = nalgebra::Complex::new(v[1 + 2 * j], v[2 + 2 * j]);
            }
            PoleSet { s: v[0], poles }
        })
        .collect())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| io_err(&path.display().to_string(), e))?;
    Ok(std::io::BufWriter::new(f))
}

fn open(path: &Path) -> Result<std::io::BufReader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| io_err(&path.display().to_string(), e))?;
    Ok(std::io::BufReader::new(f))
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

pub fn save_trajectory(path: &Path, reference: &Reference) -> Result<()> {
    write_trajectory(create(path)?, reference)
}

pub fn load_trajectory(path: &Path) -> Result<Reference> {
    read_trajectory(open(path)?, &file_name(path))
}

pub fn save_gains(path: &Path, schedule: &GainSchedule) -> Result<()> {
    write_gains(create(path)?, schedule)
}

pub fn load_gains(path: &Path) -> Result<GainSchedule> {
    read_gains(open(path)?, &file_name(path))
}

pub fn save_sim(path: &Path, result: &SimResult) -> Result<()> {
    write_sim(create(path)?, result)
}

pub fn save_poles(path: &Path, name: &str, sets: &[PoleSet]) -> Result<()> {
    write_poles(create(path)?, name, sets)
}
