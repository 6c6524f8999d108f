//! Discrete 1+1-dimensional Minkowski geometry.
//!
//! Space-time is the strip `{0..horizon} x {0..sites}` of the integer lattice
//! with `c = 1`. Every integer point is an event; there is no parity
//! constraint. A [`Cut`] is a staircase hypersurface given by a 1-Lipschitz
//! time profile over the sites, so each step is either spacelike (flat) or
//! lightlike.
//!
//! Causal future and past are closed: they contain the light cone and the
//! event itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice space-time point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub t: i64,
    pub x: i64,
}

impl Event {
    pub const fn new(t: i64, x: i64) -> Self {
        Event { t, x }
    }
}

/// Finite truncation of space-time: `sites` spatial sites and time horizon
/// `horizon`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strip {
    pub sites: usize,
    pub horizon: i64,
}

impl Strip {
    pub fn new(sites: usize, horizon: i64) -> Result<Self> {
        if sites < 2 {
            return Err(crate::error::invalid(
                "strip.sites",
                "need at least 2 sites",
            ));
        }
        if horizon < 1 {
            return Err(crate::error::invalid("strip.horizon", "need horizon >= 1"));
        }
        Ok(Strip { sites, horizon })
    }

    pub fn contains(&self, e: Event) -> bool {
        (0..=self.horizon).contains(&e.t) && (0..self.sites as i64).contains(&e.x)
    }

    /// All events of the strip, time-major.
    pub fn events(&self) -> impl Iterator<Item = Event> + '_ {
        (0..=self.horizon).flat_map(move |t| (0..self.sites as i64).map(move |x| Event::new(t, x)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalRelation {
    StrictFuture,
    LightlikeFuture,
    Spacelike,
    LightlikePast,
    StrictPast,
    Equal,
}

impl CausalRelation {
    /// `true` when `b` lies in the closed causal future of `a`.
    pub fn is_future(self) -> bool {
        matches!(
            self,
            CausalRelation::StrictFuture | CausalRelation::LightlikeFuture | CausalRelation::Equal
        )
    }

    pub fn is_past(self) -> bool {
        matches!(
            self,
            CausalRelation::StrictPast | CausalRelation::LightlikePast | CausalRelation::Equal
        )
    }

    pub fn reversed(self) -> Self {
        use CausalRelation::*;
        match self {
            StrictFuture => StrictPast,
            LightlikeFuture => LightlikePast,
            Spacelike => Spacelike,
            LightlikePast => LightlikeFuture,
            StrictPast => StrictFuture,
            Equal => Equal,
        }
    }
}

/// Where `b` lies relative to `a`.
pub fn causal_relation(a: Event, b: Event) -> CausalRelation {
    let dt = b.t - a.t;
    let dx = (b.x - a.x).abs();
    match (dt, dx) {
        (0, 0) => CausalRelation::Equal,
        (dt, dx) if dt > 0 && dx < dt => CausalRelation::StrictFuture,
        (dt, dx) if dt > 0 && dx == dt => CausalRelation::LightlikeFuture,
        (dt, dx) if dt < 0 && dx < -dt => CausalRelation::StrictPast,
        (dt, dx) if dt < 0 && dx == -dt => CausalRelation::LightlikePast,
        _ => CausalRelation::Spacelike,
    }
}

/// Invariant length `sqrt(dt^2 - dx^2)` from `a` to an event `b` in its
/// causal future.
pub fn proper_time(a: Event, b: Event) -> Result<f64> {
    if !causal_relation(a, b).is_future() {
        return Err(Error::NotCausal { from: a, to: b });
    }
    let dt = (b.t - a.t) as f64;
    let dx = (b.x - a.x) as f64;
    Ok((dt * dt - dx * dx).sqrt())
}

/// A staircase spacelike-or-lightlike hypersurface: one time per site,
/// adjacent times differing by at most one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct Cut {
    times: Vec<i64>,
}

impl TryFrom<Vec<i64>> for Cut {
    type Error = Error;

    fn try_from(times: Vec<i64>) -> Result<Self> {
        Cut::new(times)
    }
}

impl From<Cut> for Vec<i64> {
    fn from(c: Cut) -> Self {
        c.times
    }
}

impl Cut {
    pub fn new(times: Vec<i64>) -> Result<Self> {
        if let Some(site) = times.windows(2).position(|w| (w[1] - w[0]).abs() > 1) {
            return Err(Error::NotLipschitz { site });
        }
        Ok(Cut { times })
    }

    pub fn flat(sites: usize, t: i64) -> Self {
        Cut {
            times: vec![t; sites],
        }
    }

    pub fn sites(&self) -> usize {
        self.times.len()
    }

    pub fn time(&self, x: usize) -> i64 {
        self.times[x]
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn vertex(&self, x: usize) -> Event {
        Event::new(self.times[x], x as i64)
    }

    pub fn vertices(&self) -> impl Iterator<Item = Event> + '_ {
        (0..self.sites()).map(|x| self.vertex(x))
    }

    pub fn is_vertex(&self, e: Event) -> bool {
        e.x >= 0 && (e.x as usize) < self.sites() && self.times[e.x as usize] == e.t
    }

    /// Closed past: events at or below the cut.
    pub fn past_contains(&self, e: Event) -> bool {
        e.x >= 0 && (e.x as usize) < self.sites() && e.t <= self.times[e.x as usize]
    }

    pub fn is_flat(&self) -> bool {
        self.times.windows(2).all(|w| w[0] == w[1])
    }

    /// Pointwise minimum (pastmost combination).
    pub fn meet(&self, other: &Cut) -> Cut {
        Cut {
            times: zip_with(&self.times, &other.times, i64::min),
        }
    }

    /// Pointwise maximum (futuremost combination).
    pub fn join(&self, other: &Cut) -> Cut {
        Cut {
            times: zip_with(&self.times, &other.times, i64::max),
        }
    }

    /// Sites where the two cuts share their vertex.
    pub fn overlap(&self, other: &Cut) -> Vec<usize> {
        (0..self.sites())
            .filter(|&x| self.times[x] == other.times[x])
            .collect()
    }

    /// Pointwise `self <= other`.
    pub fn is_below(&self, other: &Cut) -> bool {
        self.times.iter().zip(&other.times).all(|(a, b)| a <= b)
    }

    pub(crate) fn from_times_unchecked(times: Vec<i64>) -> Cut {
        debug_assert!(times.windows(2).all(|w| (w[1] - w[0]).abs() <= 1));
        Cut { times }
    }
}

fn zip_with(a: &[i64], b: &[i64], f: impl Fn(i64, i64) -> i64) -> Vec<i64> {
    a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect()
}

/// Smallest `t > d` with `t^2 - d^2 >= level^2`, for `d >= 0`.
fn hyperboloid_offset(d: i64, level: f64) -> i64 {
    let target = level * level + (d * d) as f64;
    let mut t = target.sqrt().ceil() as i64;
    // guard against rounding in sqrt
    while t > 0 && ((t - 1) * (t - 1)) as f64 >= target {
        t -= 1;
    }
    while ((t * t) as f64) < target {
        t += 1;
    }
    t.max(d + 1)
}

/// Lattice version of the surface of constant timelike distance `level` from
/// `seed`: at each site the earliest event in the strict future of `seed`
/// whose proper time reaches `level`, clamped to `[0, horizon]`.
pub fn hyperboloid_cut(seed: Event, level: f64, strip: Strip) -> Cut {
    let times = (0..strip.sites as i64)
        .map(|x| {
            let d = (x - seed.x).abs();
            (seed.t + hyperboloid_offset(d, level)).clamp(0, strip.horizon)
        })
        .collect();
    Cut::from_times_unchecked(times)
}

/// The cut whose closed past is the past-complete event set `in_set`.
///
/// The vertex at each site is the latest event of the set in that column.
/// Fails when the set is empty in some column, covers the whole strip, or is
/// not the past of the resulting cut.
pub fn boundary_of_past_complete(in_set: impl Fn(Event) -> bool, strip: Strip) -> Result<Cut> {
    let mut times = Vec::with_capacity(strip.sites);
    for x in 0..strip.sites as i64 {
        let top = (0..=strip.horizon)
            .rev()
            .find(|&t| in_set(Event::new(t, x)))
            .ok_or(Error::DegenerateRegion)?;
        times.push(top);
    }
    if times.iter().all(|&t| t == strip.horizon) {
        return Err(Error::DegenerateRegion);
    }
    if let Some(x) = times.windows(2).position(|w| (w[1] - w[0]).abs() > 1) {
        // the lower column misses an event in the past of the higher vertex
        let lower = if times[x] < times[x + 1] { x } else { x + 1 };
        return Err(Error::NotPastComplete(Event::new(
            times[lower] + 1,
            lower as i64,
        )));
    }
    let cut = Cut::from_times_unchecked(times);
    if let Some(e) = strip.events().find(|&e| cut.past_contains(e) != in_set(e)) {
        return Err(Error::NotPastComplete(e));
    }
    Ok(cut)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> Strip {
        Strip::new(7, 10).unwrap()
    }

    #[test]
    fn relations() {
        let o = Event::new(0, 0);
        assert_eq!(
            causal_relation(o, Event::new(1, 1)),
            CausalRelation::LightlikeFuture
        );
        assert_eq!(
            causal_relation(o, Event::new(3, 1)),
            CausalRelation::StrictFuture
        );
        assert_eq!(
            causal_relation(o, Event::new(1, 2)),
            CausalRelation::Spacelike
        );
        assert_eq!(causal_relation(o, o), CausalRelation::Equal);
        assert_eq!(
            causal_relation(Event::new(3, 1), o),
            CausalRelation::StrictPast
        );
    }

    #[test]
    fn proper_times() {
        let o = Event::new(0, 0);
        assert_eq!(proper_time(o, Event::new(5, 3)).unwrap(), 4.0);
        assert_eq!(proper_time(o, Event::new(3, 3)).unwrap(), 0.0);
        assert_eq!(
            proper_time(Event::new(2, 1), Event::new(4, 1)).unwrap(),
            2.0
        );
        assert!(matches!(
            proper_time(o, Event::new(1, 2)),
            Err(Error::NotCausal { .. })
        ));
    }

    #[test]
    fn hyperboloid_level_two() {
        let cut = hyperboloid_cut(Event::new(0, 3), 2.0, strip());
        assert_eq!(cut.times(), &[4, 3, 3, 2, 3, 3, 4]);
    }

    #[test]
    fn hyperboloid_small_level_follows_light_cone() {
        let cut = hyperboloid_cut(Event::new(0, 3), 0.5, strip());
        assert_eq!(cut.times(), &[4, 3, 2, 1, 2, 3, 4]);
    }

    #[test]
    fn hyperboloid_at_horizon_is_flat() {
        let cut = hyperboloid_cut(Event::new(10, 2), 1.5, strip());
        assert_eq!(cut, Cut::flat(7, 10));
    }

    #[test]
    fn rejects_steep_profiles() {
        assert!(matches!(
            Cut::new(vec![0, 2, 2]),
            Err(Error::NotLipschitz { site: 0 })
        ));
    }

    #[test]
    fn boundary_of_flat_slice() {
        let cut = boundary_of_past_complete(|e| e.t <= 3, strip()).unwrap();
        assert_eq!(cut, Cut::flat(7, 3));
    }

    #[test]
    fn boundary_of_light_cone_past() {
        let apex = Event::new(5, 2);
        let cut = boundary_of_past_complete(
            |e| e.t <= 0 || causal_relation(e, apex).is_future(),
            strip(),
        )
        .unwrap();
        let expected: Vec<i64> = (0..7).map(|x: i64| (5 - (x - 2).abs()).max(0)).collect();
        assert_eq!(cut.times(), expected.as_slice());
    }

    #[test]
    fn boundary_round_trips_hyperboloid() {
        let h = hyperboloid_cut(Event::new(0, 3), 2.0, strip());
        let back = boundary_of_past_complete(|e| h.past_contains(e), strip()).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn boundary_rejects_degenerate_sets() {
        assert!(boundary_of_past_complete(|_| false, strip()).is_err());
        assert!(boundary_of_past_complete(|_| true, strip()).is_err());
        // future-complete, not past-complete
        assert!(boundary_of_past_complete(|e| e.t >= 3, strip()).is_err());
    }

    #[test]
    fn meet_and_join() {
        let a = Cut::flat(7, 2);
        let b = Cut::flat(7, 5);
        assert_eq!(a.meet(&b), a);
        assert_eq!(a.join(&b), b);
        assert_eq!(a.meet(&a), a);
    }
}
