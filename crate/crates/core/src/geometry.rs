//! Contact-window generation from circular-orbit geometry, and window CSV I/O.
//!
//! Satellites fly circular two-body orbits; the Earth is a sphere rotating at
//! the sidereal rate. A pass is a maximal interval where the elevation seen
//! from a ground station stays at or above the station mask.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::observation::ActionKind;

pub const EARTH_RADIUS_KM: f64 = 6378.137;
pub const EARTH_MU_KM3_S2: f64 = 398_600.4418;
/// Sidereal rotation rate, degrees per day.
const GMST_RATE_DEG_PER_DAY: f64 = 360.985_647_366_29;

/// Header of the window CSV format.
pub const WINDOW_CSV_HEADER: [&str; 7] = ["id", "asset", "station", "t_start", "t_end", "e_max_deg", "action"];

/// Window ids at or above this offset are synthesized recover candidates.
pub const RECOVER_ID_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStation {
    pub name: String,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    #[serde(default)]
    pub altitude_m: f64,
    #[serde(default = "default_mask")]
    pub min_elevation_deg: f64,
}

fn default_mask() -> f64 {
    5.0
}

impl GroundStation {
    pub fn validate(&self) -> Result<()> {
        if self.latitude_deg.abs() > 90.0 || self.longitude_deg.abs() > 180.0 {
            return Err(Error::Config(format!("station {}: coordinates out of range", self.name)));
        }
        if !(self.min_elevation_deg > 0.0 && self.min_elevation_deg < 90.0) {
            return Err(Error::Config(format!(
                "station {}: elevation mask must lie in (0, 90), got {}",
                self.name, self.min_elevation_deg
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    /// Argument of latitude at `epoch`.
    pub arg_latitude_deg: f64,
    pub epoch: DateTime<Utc>,
}

impl OrbitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.altitude_km > 0.0) || !(0.0..=180.0).contains(&self.inclination_deg) {
            return Err(Error::Config(format!(
                "orbit needs altitude > 0 and inclination in [0, 180], got {} km / {} deg",
                self.altitude_km, self.inclination_deg
            )));
        }
        Ok(())
    }

    pub fn radius_km(&self) -> f64 {
        EARTH_RADIUS_KM + self.altitude_km
    }

    /// Mean motion in rad/s.
    pub fn mean_motion(&self) -> f64 {
        (EARTH_MU_KM3_S2 / self.radius_km().powi(3)).sqrt()
    }

    pub fn period_s(&self) -> f64 {
        std::f64::consts::TAU / self.mean_motion()
    }

    /// Inertial position in km.
    pub fn position_eci(&self, t: DateTime<Utc>) -> [f64; 3] {
        let dt = seconds_between(self.epoch, t);
        let u = self.arg_latitude_deg.to_radians() + self.mean_motion() * dt;
        let (raan, inc) = (self.raan_deg.to_radians(), self.inclination_deg.to_radians());
        let r = self.radius_km();
        let (su, cu) = u.sin_cos();
        let (so, co) = raan.sin_cos();
        let (si, ci) = inc.sin_cos();
        [r * (co * cu - so * su * ci), r * (so * cu + co * su * ci), r * su * si]
    }
}

/// One visibility interval of an asset over a station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactWindow {
    pub id: u64,
    pub asset: u32,
    pub station: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub e_max_deg: f64,
    pub action: ActionKind,
}

impl ContactWindow {
    pub fn duration_minutes(&self) -> f64 {
        seconds_between(self.start, self.end) / 60.0
    }

    pub fn overlaps(&self, other: &ContactWindow) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// Recover candidate sharing this pass's geometry.
    pub fn as_recover(&self) -> ContactWindow {
        ContactWindow { id: self.id + RECOVER_ID_OFFSET, action: ActionKind::Recover, ..self.clone() }
    }
}

pub fn seconds_between(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    (b - a).num_microseconds().map(|us| us as f64 * 1e-6).unwrap_or_else(|| (b - a).num_seconds() as f64)
}

pub fn hours_between(a: DateTime<Utc>, b: DateTime<Utc>) -> f64 {
    seconds_between(a, b) / 3600.0
}

pub fn add_hours(t: DateTime<Utc>, hours: f64) -> DateTime<Utc> {
    t + Duration::microseconds((hours * 3.6e9).round() as i64)
}

/// Greenwich mean sidereal angle in radians.
pub fn gmst(t: DateTime<Utc>) -> f64 {
    let j2000 = DateTime::parse_from_rfc3339("2000-01-01T12:00:00Z").unwrap().with_timezone(&Utc);
    let days = seconds_between(j2000, t) / 86_400.0;
    (280.460_618_37 + GMST_RATE_DEG_PER_DAY * days).rem_euclid(360.0).to_radians()
}

/// Geocentric latitude/longitude (degrees) of the point below the satellite.
pub fn subsatellite_point(orbit: &OrbitSpec, t: DateTime<Utc>) -> (f64, f64) {
    let [x, y, z] = orbit.position_eci(t);
    let lat = z.atan2((x * x + y * y).sqrt()).to_degrees();
    let lon_eci = y.atan2(x);
    let lon = (lon_eci - gmst(t)).to_degrees();
    let lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
    (lat, lon)
}

/// Elevation of the satellite above the station's local horizon, degrees.
pub fn elevation_deg(orbit: &OrbitSpec, station: &GroundStation, t: DateTime<Utc>) -> f64 {
    let sat = orbit.position_eci(t);
    let theta = station.longitude_deg.to_radians() + gmst(t);
    let phi = station.latitude_deg.to_radians();
    let up = [phi.cos() * theta.cos(), phi.cos() * theta.sin(), phi.sin()];
    let rs = EARTH_RADIUS_KM + station.altitude_m / 1000.0;
    let rho = [sat[0] - rs * up[0], sat[1] - rs * up[1], sat[2] - rs * up[2]];
    let norm = (rho[0] * rho[0] + rho[1] * rho[1] + rho[2] * rho[2]).sqrt();
    let s = (rho[0] * up[0] + rho[1] * up[1] + rho[2] * up[2]) / norm;
    s.clamp(-1.0, 1.0).asin().to_degrees()
}

/// A pass before action types are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Pass {
    pub asset: u32,
    pub station: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub e_max_deg: f64,
}

fn round_to_millis(t: DateTime<Utc>) -> DateTime<Utc> {
    let ms = (t.timestamp_micros() as f64 / 1000.0).round() as i64;
    DateTime::from_timestamp_millis(ms).expect("timestamp in range")
}

/// Scan one asset/station pair for passes.
pub fn find_passes(
    asset: u32,
    orbit: &OrbitSpec,
    station: &GroundStation,
    t0: DateTime<Utc>,
    t1: DateTime<Utc>,
    step_s: f64,
) -> Vec<Pass> {
    let total = seconds_between(t0, t1);
    if !(total > 0.0) {
        return Vec::new();
    }
    let mask = station.min_elevation_deg;
    let at = |s: f64| t0 + Duration::microseconds((s * 1e6).round() as i64);
    let el = |s: f64| elevation_deg(orbit, station, at(s));

    // Boundary between a below-mask sample at `lo` and an above-mask one at `hi` (or reverse).
    let crossing = |mut below: f64, mut above: f64| {
        for _ in 0..40 {
            let mid = 0.5 * (below + above);
            if el(mid) >= mask {
                above = mid;
            } else {
                below = mid;
            }
            if (above - below).abs() < 1e-4 {
                break;
            }
        }
        above
    };

    let n_steps = (total / step_s).ceil() as usize;
    let mut passes = Vec::new();
    let mut open: Option<(f64, f64, f64)> = None; // (start, peak time, peak el)
    let mut prev_s = 0.0;
    for k in 0..=n_steps {
        let s = (k as f64 * step_s).min(total);
        let e = el(s);
        let visible = e >= mask;
        match (&mut open, visible) {
            (None, true) => {
                let start = if k == 0 { 0.0 } else { crossing(prev_s, s) };
                open = Some((start, s, e));
            }
            (Some((_, peak_t, peak_e)), true) => {
                if e > *peak_e {
                    *peak_t = s;
                    *peak_e = e;
                }
            }
            (Some((start, peak_t, peak_e)), false) => {
                let end = crossing(s, prev_s);
                passes.push(close_pass(asset, station, &el, &at, *start, end, *peak_t, *peak_e, step_s));
                open = None;
            }
            (None, false) => {}
        }
        prev_s = s;
        if s >= total {
            break;
        }
    }
    if let Some((start, peak_t, peak_e)) = open {
        passes.push(close_pass(asset, station, &el, &at, start, total, peak_t, peak_e, step_s));
    }
    passes.retain(|p| p.end > p.start);
    passes
}

#[allow(clippy::too_many_arguments)]
fn close_pass(
    asset: u32,
    station: &GroundStation,
    el: &dyn Fn(f64) -> f64,
    at: &dyn Fn(f64) -> DateTime<Utc>,
    start: f64,
    end: f64,
    peak_t: f64,
    peak_e: f64,
    step_s: f64,
) -> Pass {
    // Golden-section refinement of the sampled peak, kept inside the pass.
    let (mut a, mut b) = ((peak_t - step_s).max(start), (peak_t + step_s).min(end));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (el(c), el(d));
    for _ in 0..60 {
        if (b - a).abs() < 1e-3 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = el(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = el(d);
        }
    }
    let e_max = peak_e.max(fc).max(fd).max(station.min_elevation_deg);
    Pass {
        asset,
        station: station.name.clone(),
        start: round_to_millis(at(start)),
        end: round_to_millis(at(end)),
        e_max_deg: e_max,
    }
}

/// Candidate windows for every asset/station pair over `[t0, t1]`.
///
/// Each geometric pass yields a contact window (even id) and a beacon window
/// (odd id) sharing its geometry. Output is ordered by start time.
pub fn generate_windows(
    orbits: &[(u32, OrbitSpec)],
    stations: &[GroundStation],
    t0: DateTime<Utc>,
    t1: DateTime<Utc>,
    step_s: f64,
) -> Result<Vec<ContactWindow>> {
    if !(step_s > 0.0 && step_s <= 30.0) {
        return Err(Error::Contract(format!("scan step must lie in (0, 30] s, got {step_s}")));
    }
    let mut passes = Vec::new();
    for (asset, orbit) in orbits {
        for station in stations {
            passes.extend(find_passes(*asset, orbit, station, t0, t1, step_s));
        }
    }
    passes.sort_by(|a, b| {
        (a.start, a.asset, &a.station).cmp(&(b.start, b.asset, &b.station))
    });
    let mut windows = Vec::with_capacity(passes.len() * 2);
    for (k, p) in passes.into_iter().enumerate() {
        let contact = ContactWindow {
            id: 2 * k as u64,
            asset: p.asset,
            station: p.station,
            start: p.start,
            end: p.end,
            e_max_deg: p.e_max_deg,
            action: ActionKind::Contact,
        };
        let beacon = ContactWindow { id: contact.id + 1, action: ActionKind::Beacon, ..contact.clone() };
        windows.push(contact);
        windows.push(beacon);
    }
    Ok(windows)
}

fn format_time(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn write_windows<W: Write>(out: W, windows: &[ContactWindow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(WINDOW_CSV_HEADER)?;
    for win in windows {
        w.write_record([
            win.id.to_string(),
            win.asset.to_string(),
            win.station.clone(),
            format_time(win.start),
            format_time(win.end),
            win.e_max_deg.to_string(),
            win.action.name().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_windows_file(path: &Path, windows: &[ContactWindow]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_windows(std::io::BufWriter::new(f), windows)
}

/// Parse the window CSV format; output is stably sorted by start time.
pub fn read_windows<R: Read>(input: R) -> Result<Vec<ContactWindow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?;
    if header.iter().collect::<Vec<_>>() != WINDOW_CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", WINDOW_CSV_HEADER.join(",")),
        });
    }

    let mut windows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let perr = |what: &str, e: &dyn std::fmt::Display| Error::Parse { line, message: format!("{what}: {e}") };
        let time = |i: usize, what: &str| {
            DateTime::parse_from_rfc3339(field(i)).map(|t| t.with_timezone(&Utc)).map_err(|e| perr(what, &e))
        };

        let w = ContactWindow {
            id: field(0).parse().map_err(|e| perr("id", &e))?,
            asset: field(1).parse().map_err(|e| perr("asset", &e))?,
            station: field(2).to_string(),
            start: time(3, "t_start")?,
            end: time(4, "t_end")?,
            e_max_deg: field(5).parse().map_err(|e| perr("e_max_deg", &e))?,
            action: field(6).parse().map_err(|e: Error| perr("action", &e))?,
        };
        if w.start >= w.end {
            return Err(Error::Validation { row: line, message: format!("window {} ends before it starts", w.id) });
        }
        if !(w.e_max_deg > 0.0 && w.e_max_deg <= 90.0) {
            return Err(Error::Validation {
                row: line,
                message: format!("window {} has peak elevation {} outside (0, 90]", w.id, w.e_max_deg),
            });
        }
        if w.station.is_empty() {
            return Err(Error::Validation { row: line, message: format!("window {} has no station", w.id) });
        }
        windows.push(w);
    }
    windows.sort_by_key(|w| w.start);
    Ok(windows)
}

pub fn load_windows(path: &Path) -> Result<Vec<ContactWindow>> {
    read_windows(std::fs::File::open(path)?)
}
