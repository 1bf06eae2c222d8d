//! Training-sample selection: k-means over the light domain and calendar
//! schedules.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skyctx::{SkyState, Timestamp};

/// Upper bounds used to scale the light domain onto the unit cube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainBounds {
    pub altitude_max: f64,
    pub dni_max: f64,
    pub dhi_max: f64,
}

impl Default for DomainBounds {
    fn default() -> Self {
        Self {
            altitude_max: 90.0,
            dni_max: 1400.0,
            dhi_max: 700.0,
        }
    }
}

impl DomainBounds {
    /// `(al_n, az_n, dir_n, dif_n)`, each clamped to `[0, 1]`.
    pub fn normalize(&self, s: &SkyState) -> [f64; 4] {
        [
            (s.altitude / self.altitude_max).clamp(0.0, 1.0),
            ((s.azimuth + 180.0) / 360.0).clamp(0.0, 1.0),
            (s.dni / self.dni_max).clamp(0.0, 1.0),
            (s.dhi / self.dhi_max).clamp(0.0, 1.0),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightPoint {
    /// Position in the source state list.
    pub index: usize,
    pub coords: [f64; 4],
}

pub fn normalize_domain(states: &[SkyState]) -> Result<Vec<LightPoint>> {
    if states.is_empty() {
        return Err(Error::invalid("cannot normalize an empty state list"));
    }
    let b = DomainBounds::default();
    Ok(states
        .iter()
        .enumerate()
        .map(|(index, s)| LightPoint {
            index,
            coords: b.normalize(s),
        })
        .collect())
}

fn dist2(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Outcome of a k-means run.
#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub centroids: Vec<[f64; 4]>,
    /// Cluster of each input point.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squared distances after each assignment step.
    pub objective: Vec<f64>,
    /// Per cluster, the position (in the input slice) of the member nearest
    /// its centroid.
    pub representatives: Vec<usize>,
}

const MAX_LLOYD_ITERATIONS: usize = 100;

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(points: &[LightPoint], k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k = {k} outside [1, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<[f64; 4]> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centroids.push(points[first].coords);
    chosen[first] = true;
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(&p.coords, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                if r < d {
                    pick = Some(i);
                    break;
                }
                r -= d;
            }
            // rounding can run off the end
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            // every remaining point duplicates a centroid
            (0..n).find(|&i| !chosen[i]).unwrap()
        };
        chosen[pick] = true;
        let c = points[pick].coords;
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(&p.coords, &c));
        }
    }

    let mut assignment = vec![usize::MAX; n];
    let mut objective = Vec::new();
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut changed = false;
        let mut obj = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (best, bd) = nearest(&centroids, &p.coords);
            obj += bd;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        changed |= fill_empty_clusters(points, &mut centroids, &mut assignment, &mut obj);
        objective.push(obj);
        if !changed {
            break;
        }
        update_centroids(points, &assignment, &mut centroids);
    }

    let mut representatives = vec![usize::MAX; k];
    let mut best_d = vec![f64::INFINITY; k];
    for (i, p) in points.iter().enumerate() {
        let c = assignment[i];
        let d = dist2(&p.coords, &centroids[c]);
        if d < best_d[c] {
            best_d[c] = d;
            representatives[c] = i;
        }
    }
    Ok(KMeansResult {
        centroids,
        assignment,
        objective,
        representatives,
    })
}

fn nearest(centroids: &[[f64; 4]], p: &[f64; 4]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist2(p, cen);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn update_centroids(points: &[LightPoint], assignment: &[usize], centroids: &mut [[f64; 4]]) {
    let k = centroids.len();
    let mut sums = vec![[0.0; 4]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment) {
        counts[c] += 1;
        for d in 0..4 {
            sums[c][d] += p.coords[d];
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for d in 0..4 {
                centroids[c][d] = sums[c][d] / counts[c] as f64;
            }
        }
    }
}

/// Moves the worst-fit point of a multi-member cluster into each empty
/// cluster. Returns true when anything moved.
fn fill_empty_clusters(
    points: &[LightPoint],
    centroids: &mut [[f64; 4]],
    assignment: &mut [usize],
    objective: &mut f64,
) -> bool {
    let k = centroids.len();
    let mut moved = false;
    loop {
        let mut counts = vec![0usize; k];
        for &c in assignment.iter() {
            counts[c] += 1;
        }
        let Some(empty) = (0..k).find(|&c| counts[c] == 0) else {
            return moved;
        };
        let mut worst = (usize::MAX, -1.0);
        for (i, p) in points.iter().enumerate() {
            let c = assignment[i];
            if counts[c] < 2 {
                continue;
            }
            let d = dist2(&p.coords, &centroids[c]);
            if d > worst.1 {
                worst = (i, d);
            }
        }
        let i = worst.0;
        *objective -= worst.1;
        assignment[i] = empty;
        centroids[empty] = points[i].coords;
        moved = true;
    }
}

/// The `k` cluster representatives (positions into `points`), sorted.
pub fn kmeans_select(points: &[LightPoint], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut reps = kmeans(points, k, seed)?.representatives;
    reps.sort_unstable();
    debug_assert!(reps.windows(2).all(|w| w[0] < w[1]));
    Ok(reps)
}

// ---------------------------------------------------------------------------
// Schedules

/// A run of consecutive days centered on an anchor date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub month: u32,
    pub day: u32,
    pub days: u32,
}

impl DayWindow {
    pub const fn new(month: u32, day: u32, days: u32) -> Self {
        Self { month, day, days }
    }

    fn contains(&self, ts: &Timestamp) -> bool {
        let anchor = Timestamp {
            year: ts.year,
            month: self.month,
            day: self.day,
            hour: 0,
            minute: 0,
        }
        .day_of_year() as i64;
        let start = anchor - (self.days as i64) / 2;
        let offset = (ts.day_of_year() as i64 - start).rem_euclid(365);
        offset < self.days as i64
    }
}

pub const SPRING_EQUINOX: (u32, u32) = (3, 20);
pub const SUMMER_SOLSTICE: (u32, u32) = (6, 21);
pub const FALL_EQUINOX: (u32, u32) = (9, 22);
pub const WINTER_SOLSTICE: (u32, u32) = (12, 21);

/// Start hour of the clock window used by the built-in day schedules.
pub const DEFAULT_CLOCK_START: u32 = 6;

fn anchors(days: u32, with_fall: bool) -> Vec<DayWindow> {
    [SPRING_EQUINOX, SUMMER_SOLSTICE, FALL_EQUINOX, WINTER_SOLSTICE]
        .into_iter()
        .filter(|&a| with_fall || a != FALL_EQUINOX)
        .map(|(m, d)| DayWindow::new(m, d, days))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleParams {
    Kmeans {
        k: usize,
    },
    Month {
        month: u32,
    },
    Days {
        windows: Vec<DayWindow>,
        /// When set, only timestamps in `[start, start + 12)` hours are taken
        /// and the daylight filter is not applied.
        clock_start: Option<u32>,
    },
    Explicit {
        indices: Vec<usize>,
    },
}

impl ScheduleParams {
    /// Three days at each equinox and solstice.
    pub fn set3a() -> Self {
        ScheduleParams::Days {
            windows: anchors(3, true),
            clock_start: Some(DEFAULT_CLOCK_START),
        }
    }

    /// [`ScheduleParams::set3a`] without the fall equinox.
    pub fn set3b() -> Self {
        ScheduleParams::Days {
            windows: anchors(3, false),
            clock_start: Some(DEFAULT_CLOCK_START),
        }
    }

    /// One day at each equinox and solstice.
    pub fn set3c() -> Self {
        ScheduleParams::Days {
            windows: anchors(1, true),
            clock_start: Some(DEFAULT_CLOCK_START),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScheduleParams::Kmeans { .. } => "kmeans",
            ScheduleParams::Month { .. } => "month",
            ScheduleParams::Days { .. } => "days",
            ScheduleParams::Explicit { .. } => "explicit",
        }
    }
}

/// Train/validation split over indices of a state list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub params: ScheduleParams,
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleDoc {
    kind: String,
    params: ScheduleParams,
    seed: u64,
    train: Vec<usize>,
    validation: Vec<usize>,
}

impl Schedule {
    /// JSON document `{kind, params, seed, train, validation}`.
    pub fn to_json(&self) -> Result<String> {
        let doc = ScheduleDoc {
            kind: self.params.kind_name().to_string(),
            params: self.params.clone(),
            seed: self.seed,
            train: self.train.clone(),
            validation: self.validation.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScheduleDoc = serde_json::from_str(text)?;
        if doc.kind != doc.params.kind_name() {
            return Err(Error::format(format!(
                "schedule kind {:?} does not match params kind {:?}",
                doc.kind,
                doc.params.kind_name()
            )));
        }
        let s = Schedule {
            params: doc.params,
            seed: doc.seed,
            train: doc.train,
            validation: doc.validation,
        };
        s.check_disjoint()?;
        Ok(s)
    }

    /// Train and validation together (the pre-split selection), sorted.
    pub fn selected(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        all.sort_unstable();
        all
    }

    fn check_disjoint(&self) -> Result<()> {
        let t: BTreeSet<_> = self.train.iter().collect();
        if t.len() != self.train.len() {
            return Err(Error::format("duplicate train indices"));
        }
        let v: BTreeSet<_> = self.validation.iter().collect();
        if v.len() != self.validation.len() || t.intersection(&v).next().is_some() {
            return Err(Error::format("validation indices overlap or repeat"));
        }
        Ok(())
    }

    pub fn check_range(&self, n: usize) -> Result<()> {
        if let Some(&i) = self.train.iter().chain(&self.validation).find(|&&i| i >= n) {
            return Err(Error::data(format!("schedule index {i} outside dataset of {n}")));
        }
        Ok(())
    }
}

/// Fraction of the selection moved into validation.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// Candidate indices a schedule selects, before the validation split.
pub fn select_indices(states: &[SkyState], params: &ScheduleParams, seed: u64) -> Result<Vec<usize>> {
    if states.is_empty() {
        return Err(Error::invalid("empty state list"));
    }
    let daylight: Vec<usize> = (0..states.len()).filter(|&i| states[i].is_daylight()).collect();
    let selected: Vec<usize> = match params {
        ScheduleParams::Kmeans { k } => {
            let subset: Vec<SkyState> = daylight.iter().map(|&i| states[i]).collect();
            if subset.is_empty() {
                return Err(Error::invalid("no daylight states to cluster"));
            }
            let points = normalize_domain(&subset)?;
            kmeans_select(&points, *k, seed)?
                .into_iter()
                .map(|j| daylight[j])
                .collect()
        }
        ScheduleParams::Month { month } => {
            if !(1..=12).contains(month) {
                return Err(Error::invalid(format!("month {month} out of range")));
            }
            daylight
                .into_iter()
                .filter(|&i| states[i].timestamp.month == *month)
                .collect()
        }
        ScheduleParams::Days {
            windows,
            clock_start,
        } => {
            if windows.is_empty() || windows.iter().any(|w| w.days == 0) {
                return Err(Error::invalid("day schedule needs nonempty windows"));
            }
            for w in windows {
                Timestamp::new(2001, w.month, w.day, 0, 0)?;
            }
            (0..states.len())
                .filter(|&i| {
                    let s = &states[i];
                    let in_days = windows.iter().any(|w| w.contains(&s.timestamp));
                    let in_clock = match clock_start {
                        Some(start) => {
                            let h = s.timestamp.hour_fraction();
                            h >= *start as f64 && h < (*start + 12) as f64
                        }
                        None => s.is_daylight(),
                    };
                    in_days && in_clock
                })
                .collect()
        }
        ScheduleParams::Explicit { indices } => {
            let set: BTreeSet<usize> = indices.iter().copied().collect();
            if set.len() != indices.len() {
                return Err(Error::invalid("explicit schedule repeats an index"));
            }
            if let Some(&i) = set.iter().find(|&&i| i >= states.len()) {
                return Err(Error::invalid(format!("explicit index {i} out of range")));
            }
            set.into_iter().collect()
        }
    };
    if selected.is_empty() {
        return Err(Error::invalid(format!(
            "{} schedule selects no states",
            params.kind_name()
        )));
    }
    Ok(selected)
}

/// Selects the training states and moves a seeded 10% into validation.
pub fn build_schedule(states: &[SkyState], params: ScheduleParams, seed: u64) -> Result<Schedule> {
    let mut selected = select_indices(states, &params, seed)?;
    let n_val = (selected.len() as f64 * VALIDATION_FRACTION).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_7a11);
    selected.shuffle(&mut rng);
    let mut validation = selected[..n_val].to_vec();
    let mut train = selected[n_val..].to_vec();
    validation.sort_unstable();
    train.sort_unstable();
    Ok(Schedule {
        params,
        seed,
        train,
        validation,
    })
}

/// Seeded draw of `n_test` indices disjoint from the schedule.
pub fn split_test(n_states: usize, schedule: &Schedule, n_test: usize, seed: u64) -> Result<Vec<usize>> {
    let reserved: BTreeSet<usize> = schedule.train.iter().chain(&schedule.validation).copied().collect();
    let mut pool: Vec<usize> = (0..n_states).filter(|i| !reserved.contains(i)).collect();
    if n_test > pool.len() {
        return Err(Error::invalid(format!(
            "requested {n_test} test states but only {} are unreserved",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e57);
    pool.shuffle(&mut rng);
    let mut test = pool[..n_test].to_vec();
    test.sort_unstable();
    Ok(test)
}
