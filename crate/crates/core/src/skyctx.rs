//! Weather records, solar geometry, and the annual sequence of sky states.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// EPW missing-value sentinel for irradiance fields.
pub const MISSING_IRRADIANCE: f64 = 9999.0;

const CUMULATIVE_DAYS: [u32; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];
const DAYS_IN_MONTH: [u32; 12] = [31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Site {
    /// Degrees north.
    pub latitude: f64,
    /// Degrees east (west is negative).
    pub longitude: f64,
    /// Hours offset from UTC of the local standard time.
    pub timezone: f64,
    /// Meters.
    pub elevation: f64,
}

impl Site {
    pub fn new(latitude: f64, longitude: f64, timezone: f64, elevation: f64) -> Result<Self> {
        if !(-90.0..=90.0).contains(&latitude) {
            return Err(Error::invalid(format!("latitude {latitude} out of range")));
        }
        if !(-180.0..=180.0).contains(&longitude) {
            return Err(Error::invalid(format!("longitude {longitude} out of range")));
        }
        if !(-12.0..=14.0).contains(&timezone) {
            return Err(Error::invalid(format!("timezone {timezone} out of range")));
        }
        Ok(Self {
            latitude,
            longitude,
            timezone,
            elevation,
        })
    }

    /// 47.6°N, 122.3°W, UTC−8.
    pub fn seattle() -> Self {
        Self {
            latitude: 47.6,
            longitude: -122.3,
            timezone: -8.0,
            elevation: 56.0,
        }
    }
}

/// Local standard time, minute resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
}

impl Timestamp {
    pub fn new(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month {month} out of range")));
        }
        let max_day = DAYS_IN_MONTH[month as usize - 1] + u32::from(month == 2);
        if day < 1 || day > max_day || hour > 23 || minute > 59 {
            return Err(Error::invalid(format!(
                "invalid date/time {year}-{month}-{day} {hour}:{minute}"
            )));
        }
        Ok(Self {
            year,
            month,
            day,
            hour,
            minute,
        })
    }

    /// Day of year in a 365-day calendar; Feb 29 shares day 60 with Mar 1.
    pub fn day_of_year(&self) -> u32 {
        CUMULATIVE_DAYS[self.month as usize - 1] + self.day
    }

    pub fn hour_fraction(&self) -> f64 {
        self.hour as f64 + self.minute as f64 / 60.0
    }

    /// Minutes since Jan 1 00:00 on a 366-day calendar. TMY files mix source
    /// years, so chronology is taken within one calendar year.
    pub fn minute_of_year(&self) -> u32 {
        let day = CUMULATIVE_DAYS[self.month as usize - 1] + u32::from(self.month > 2) + self.day;
        ((day - 1) * 24 + self.hour) * 60 + self.minute
    }

    /// `YYYYMMDD_HHMM`.
    pub fn tag(&self) -> String {
        format!(
            "{:04}{:02}{:02}_{:02}{:02}",
            self.year, self.month, self.day, self.hour, self.minute
        )
    }

    /// Parses the `YYYYMMDD_HHMM` form produced by [`Timestamp::tag`].
    pub fn parse_tag(s: &str) -> Result<Self> {
        let bad = || Error::format(format!("bad timestamp {s:?}"));
        let (date, time) = s.split_once('_').ok_or_else(bad)?;
        if date.len() != 8 || time.len() != 4 {
            return Err(bad());
        }
        let n = |t: &str| t.parse::<u32>().map_err(|_| bad());
        Timestamp::new(
            date[0..4].parse::<i32>().map_err(|_| bad())?,
            n(&date[4..6])?,
            n(&date[6..8])?,
            n(&time[0..2])?,
            n(&time[2..4])?,
        )
        .map_err(|_| bad())
    }
}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.minute_of_year()
            .cmp(&other.minute_of_year())
            .then(self.year.cmp(&other.year))
    }
}

impl std::fmt::Display for Timestamp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02}T{:02}:{:02}",
            self.year, self.month, self.day, self.hour, self.minute
        )
    }
}

/// One hourly EPW record, reduced to what the pipeline needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherRecord {
    /// Interval-center local standard time.
    pub timestamp: Timestamp,
    /// Direct normal irradiance, W/m².
    pub dni: f64,
    /// Diffuse horizontal irradiance, W/m².
    pub dhi: f64,
}

/// Sun position and sky irradiance for one hour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkyState {
    pub timestamp: Timestamp,
    /// Degrees above the horizon.
    pub altitude: f64,
    /// Degrees, 0 = south, positive toward west, in (−180, 180].
    pub azimuth: f64,
    /// Direct normal irradiance, W/m².
    pub dni: f64,
    /// Diffuse horizontal irradiance, W/m².
    pub dhi: f64,
}

impl SkyState {
    pub fn is_daylight(&self) -> bool {
        self.altitude > 0.0 && self.dni + self.dhi > 0.0
    }

    /// Unit vector toward the sun in the panorama frame (+x west, +y south, +z up).
    pub fn sun_direction(&self) -> [f64; 3] {
        let al = self.altitude.to_radians();
        let az = self.azimuth.to_radians();
        [al.cos() * az.sin(), al.cos() * az.cos(), al.sin()]
    }
}

#[derive(Debug, Clone)]
pub struct EpwData {
    pub site: Site,
    pub records: Vec<WeatherRecord>,
    /// Number of irradiance fields that carried the 9999 sentinel.
    pub missing_values: usize,
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::format(format!("line {line}: bad {what} field {s:?}")))
}

/// Parses an EnergyPlus weather file.
pub fn parse_epw(text: &str) -> Result<EpwData> {
    let mut lines = text.lines().enumerate();
    let site = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((i, l)) if l.starts_with("LOCATION,") => {
                let f: Vec<&str> = l.split(',').collect();
                if f.len() < 10 {
                    return Err(Error::format(format!(
                        "line {}: LOCATION needs 10 fields, got {}",
                        i + 1,
                        f.len()
                    )));
                }
                let n = i + 1;
                break Site::new(
                    parse_field(f[6], n, "latitude")?,
                    parse_field(f[7], n, "longitude")?,
                    parse_field(f[8], n, "timezone")?,
                    parse_field(f[9], n, "elevation")?,
                )
                .map_err(|e| Error::format(format!("line {n}: {e}")))?;
            }
            _ => return Err(Error::format("missing LOCATION line")),
        }
    };

    let mut records = Vec::with_capacity(8760);
    let mut missing_values = 0;
    for (i, line) in lines {
        let line_no = i + 1;
        let trimmed = line.trim();
        // header keyword lines start with a letter
        if trimmed.is_empty() || !trimmed.starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        let f: Vec<&str> = trimmed.split(',').collect();
        if f.len() < 20 {
            return Err(Error::format(format!(
                "line {line_no}: record has {} fields, expected at least 20",
                f.len()
            )));
        }
        let year: i32 = parse_field(f[0], line_no, "year")?;
        let month: u32 = parse_field(f[1], line_no, "month")?;
        let day: u32 = parse_field(f[2], line_no, "day")?;
        let hour: u32 = parse_field(f[3], line_no, "hour")?;
        if !(1..=24).contains(&hour) {
            return Err(Error::format(format!("line {line_no}: hour {hour} out of range")));
        }
        let timestamp = Timestamp::new(year, month, day, hour - 1, 30)
            .map_err(|e| Error::format(format!("line {line_no}: {e}")))?;
        let mut irr = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = parse_field(s, line_no, what)?;
            if v >= MISSING_IRRADIANCE {
                missing_values += 1;
                Ok(0.0)
            } else {
                Ok(v.max(0.0))
            }
        };
        let dni = irr(f[14], "direct normal")?;
        let dhi = irr(f[15], "diffuse horizontal")?;
        records.push(WeatherRecord {
            timestamp,
            dni,
            dhi,
        });
    }
    Ok(EpwData {
        site,
        records,
        missing_values,
    })
}

/// Solar altitude and azimuth (degrees) with Spencer's declination and
/// equation-of-time series.
pub fn sun_position(site: &Site, ts: &Timestamp) -> (f64, f64) {
    use std::f64::consts::PI;
    let clock = ts.hour_fraction();
    let gamma = 2.0 * PI * (ts.day_of_year() as f64 - 1.0 + (clock - 12.0) / 24.0) / 365.0;
    let decl = 0.006918 - 0.399912 * gamma.cos() + 0.070257 * gamma.sin()
        - 0.006758 * (2.0 * gamma).cos()
        + 0.000907 * (2.0 * gamma).sin()
        - 0.002697 * (3.0 * gamma).cos()
        + 0.00148 * (3.0 * gamma).sin();
    let eot_min = 229.18
        * (0.000075 + 0.001868 * gamma.cos()
            - 0.032077 * gamma.sin()
            - 0.014615 * (2.0 * gamma).cos()
            - 0.040849 * (2.0 * gamma).sin());
    let solar_time = clock + (4.0 * (site.longitude - 15.0 * site.timezone) + eot_min) / 60.0;
    let h = (15.0 * (solar_time - 12.0)).to_radians();
    let phi = site.latitude.to_radians();

    let sin_al = phi.sin() * decl.sin() + phi.cos() * decl.cos() * h.cos();
    let al = sin_al.clamp(-1.0, 1.0).asin();
    let az = h
        .sin()
        .atan2(h.cos() * phi.sin() - decl.tan() * phi.cos());
    let mut az_deg = az.to_degrees();
    if az_deg <= -180.0 {
        az_deg += 360.0;
    }
    (al.to_degrees(), az_deg)
}

/// One state per record, daylight or not, in record order.
pub fn hourly_sky_states(site: &Site, records: &[WeatherRecord]) -> Vec<SkyState> {
    records
        .iter()
        .map(|r| {
            let (altitude, azimuth) = sun_position(site, &r.timestamp);
            SkyState {
                timestamp: r.timestamp,
                altitude,
                azimuth,
                dni: r.dni,
                dhi: r.dhi,
            }
        })
        .collect()
}

/// Daylight states (sun above the horizon and nonzero sky irradiance), in
/// chronological order.
pub fn annual_sky_states(site: &Site, records: &[WeatherRecord]) -> Result<Vec<SkyState>> {
    if records.is_empty() {
        return Err(Error::invalid("no weather records"));
    }
    let mut states: Vec<SkyState> = hourly_sky_states(site, records)
        .into_iter()
        .filter(SkyState::is_daylight)
        .collect();
    states.sort_by_key(|s| s.timestamp);
    states.dedup_by_key(|s| s.timestamp);
    Ok(states)
}

// ---------------------------------------------------------------------------
// Synthetic weather

/// Seeded generator for a typical-year EPW with a maritime, overcast-dominated
/// climate. Clear, broken and overcast days alternate via a seasonal Markov
/// chain; clear-sky irradiance follows a Meinel-type air-mass attenuation.
pub fn synthetic_weather(site: &Site, year: i32, seed: u64) -> Vec<WeatherRecord> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(8760);
    // 0 = clear, 1 = broken, 2 = overcast
    let mut sky_kind = 2usize;
    let mut hourly_noise = 0.0f64;
    for month in 1..=12u32 {
        for day in 1..=DAYS_IN_MONTH[month as usize - 1] {
            let doy = CUMULATIVE_DAYS[month as usize - 1] + day;
            // summer weight: 1 at mid-July, 0 at mid-January
            let summer = 0.5 - 0.5 * (2.0 * PI * (doy as f64 - 15.0) / 365.0).cos();
            let p_clear = 0.12 + 0.43 * summer;
            let p_overcast = 0.68 - 0.48 * summer;
            let u: f64 = rng.random();
            let persist: f64 = rng.random();
            if persist > 0.55 {
                sky_kind = if u < p_clear {
                    0
                } else if u < 1.0 - p_overcast {
                    1
                } else {
                    2
                };
            }
            let day_level: f64 = rng.random();
            for epw_hour in 1..=24u32 {
                let ts = Timestamp {
                    year,
                    month,
                    day,
                    hour: epw_hour - 1,
                    minute: 30,
                };
                let (al, _) = sun_position(site, &ts);
                hourly_noise = 0.7 * hourly_noise + 0.3 * (rng.random::<f64>() - 0.5);
                if al <= 0.0 {
                    records.push(WeatherRecord {
                        timestamp: ts,
                        dni: 0.0,
                        dhi: 0.0,
                    });
                    continue;
                }
                let sin_al = al.to_radians().sin();
                let i0 = 1367.0 * (1.0 + 0.033 * (2.0 * PI * doy as f64 / 365.0).cos());
                let air_mass = 1.0 / (sin_al + 0.50572 * (al + 6.07995).powf(-1.6364));
                let clear_dni = i0 * 0.7f64.powf(air_mass.powf(0.678));
                let clear_dhi = (0.11 * i0 * sin_al).min(150.0) + 5.0;
                let (dni, dhi) = match sky_kind {
                    0 => {
                        let k = (0.88 + 0.1 * day_level + 0.2 * hourly_noise).clamp(0.6, 1.0);
                        (clear_dni * k, clear_dhi * (1.1 - 0.3 * k))
                    }
                    1 => {
                        let k = (0.2 + 0.5 * day_level + 1.2 * hourly_noise).clamp(0.0, 0.85);
                        let dhi = (0.15 + 0.2 * (1.0 - k)) * i0 * sin_al + 10.0;
                        (clear_dni * k, dhi)
                    }
                    _ => {
                        let k = (0.12 + 0.18 * day_level + 0.3 * hourly_noise).clamp(0.03, 0.4);
                        let dni = (clear_dni * (0.15 * hourly_noise).max(0.0)).min(80.0);
                        (dni, k * i0 * sin_al + 3.0)
                    }
                };
                records.push(WeatherRecord {
                    timestamp: ts,
                    dni: dni.max(0.0).round(),
                    dhi: dhi.max(0.0).round(),
                });
            }
        }
    }
    records
}

/// Serializes records as an EPW document (35 fields per record; fields not
/// tracked here carry neutral placeholders).
pub fn write_epw(site: &Site, city: &str, records: &[WeatherRecord]) -> String {
    let mut out = String::with_capacity(records.len() * 120 + 512);
    let _ = writeln!(
        out,
        "LOCATION,{city},-,-,SYNTH,000000,{},{},{:.1},{:.1}",
        site.latitude, site.longitude, site.timezone, site.elevation
    );
    out.push_str("DESIGN CONDITIONS,0\n");
    out.push_str("TYPICAL/EXTREME PERIODS,0\n");
    out.push_str("GROUND TEMPERATURES,0\n");
    out.push_str("HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0\n");
    out.push_str("COMMENTS 1,synthetic typical-year weather\n");
    out.push_str("COMMENTS 2,irradiance only; other fields are placeholders\n");
    out.push_str("DATA PERIODS,1,1,Data,Sunday, 1/ 1,12/31\n");
    for r in records {
        let t = &r.timestamp;
        let ghi = r.dhi + r.dni * sun_position(site, t).0.to_radians().sin().max(0.0);
        let _ = writeln!(
            out,
            "{},{},{},{},60,?9?9?9?9E0?9?9?9?9?9?9?9?9?9?9?9?9?9?9?9*9*9?9?9?9,\
             10.0,6.0,75,101300,0,0,300,{:.0},{:.0},{:.0},0,0,0,0,180,2.0,8,8,16.0,\
             1000,9,999999999,10,0.100,0,88,0.20,0.0,1.0",
            t.year,
            t.month,
            t.day,
            t.hour + 1,
            ghi,
            r.dni,
            r.dhi
        );
    }
    out
}
