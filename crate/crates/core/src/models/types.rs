use std::cmp::Ordering;
use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Urgency flag of a task. Higher urgency preempts lower urgency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskClass {
    Red,
    Yellow,
    Green,
}

impl TaskClass {
    /// Highest priority first.
    pub const ALL: [TaskClass; 3] = [TaskClass::Red, TaskClass::Yellow, TaskClass::Green];

    pub fn index(self) -> usize {
        match self {
            TaskClass::Red => 0,
            TaskClass::Yellow => 1,
            TaskClass::Green => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn priority(self) -> u8 {
        2 - self.index() as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskClass::Red => "red",
            TaskClass::Yellow => "yellow",
            TaskClass::Green => "green",
        }
    }

    /// Classes that preempt `self`.
    pub fn higher(self) -> &'static [TaskClass] {
        &Self::ALL[..self.index()]
    }
}

impl PartialOrd for TaskClass {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TaskClass {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority().cmp(&other.priority())
    }
}

impl fmt::Display for TaskClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per task class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMap<T> {
    pub red: T,
    pub yellow: T,
    pub green: T,
}

impl<T: Copy> ClassMap<T> {
    pub fn new(red: T, yellow: T, green: T) -> Self {
        Self { red, yellow, green }
    }

    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_fn(mut f: impl FnMut(TaskClass) -> T) -> Self {
        Self::new(f(TaskClass::Red), f(TaskClass::Yellow), f(TaskClass::Green))
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(TaskClass, T) -> U) -> ClassMap<U> {
        ClassMap::from_fn(|c| f(c, self[c]))
    }

    pub fn to_array(&self) -> [T; 3] {
        [self.red, self.yellow, self.green]
    }
}

impl<T> Index<TaskClass> for ClassMap<T> {
    type Output = T;
    fn index(&self, c: TaskClass) -> &T {
        match c {
            TaskClass::Red => &self.red,
            TaskClass::Yellow => &self.yellow,
            TaskClass::Green => &self.green,
        }
    }
}

impl<T> IndexMut<TaskClass> for ClassMap<T> {
    fn index_mut(&mut self, c: TaskClass) -> &mut T {
        match c {
            TaskClass::Red => &mut self.red,
            TaskClass::Yellow => &mut self.yellow,
            TaskClass::Green => &mut self.green,
        }
    }
}

/// A device type: arrival rates, switched capacitance, frequency cap and
/// population share.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UeProfile {
    pub arrival_rates: ClassMap<f64>,
    pub eta: f64,
    pub f_max: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

/// Local-service probability per class plus the local processor frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub p: ClassMap<f64>,
    pub mu0: f64,
}

impl Policy {
    pub fn new(p_r: f64, p_y: f64, p_g: f64, mu0: f64) -> Self {
        Self {
            p: ClassMap::new(p_r, p_y, p_g),
            mu0,
        }
    }

    /// Probability of offloading class `c` to the edge server.
    pub fn offload(&self, c: TaskClass) -> f64 {
        1.0 - self.p[c]
    }

    pub fn is_feasible(&self, f_max: f64) -> bool {
        self.p.to_array().iter().all(|p| (0.0..=1.0).contains(p))
            && self.mu0 >= 0.0
            && self.mu0 <= f_max
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub num_ues: usize,
    pub es_rate: f64,
    pub scalarization: f64,
    pub aoi_weights: ClassMap<f64>,
    pub profiles: Vec<UeProfile>,
}

impl SystemConfig {
    /// Type index of each of the `num_ues` devices, apportioned from the profile
    /// weights by largest remainder. Ties go to the lower type index.
    pub fn assign_types(&self) -> Vec<usize> {
        let n = self.num_ues;
        let total: f64 = self.profiles.iter().map(|p| p.weight).sum();
        let quotas: Vec<f64> = self
            .profiles
            .iter()
            .map(|p| p.weight / total * n as f64)
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..quotas.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut left = n.saturating_sub(counts.iter().sum());
        for &t in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[t] += 1;
            left -= 1;
        }
        counts
            .iter()
            .enumerate()
            .flat_map(|(t, &c)| std::iter::repeat_n(t, c))
            .collect()
    }
}

/// Rates seen by one device that are not under its own control, plus its own
/// higher-priority local traffic.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExogenousRates {
    /// Same-class offloaded traffic of every other device.
    pub lambda_minus: ClassMap<f64>,
    /// Offloaded higher-priority traffic of all devices. Red entry unused.
    pub high_total: ClassMap<f64>,
    /// Own higher-priority traffic served locally. Red entry unused.
    pub high_local: ClassMap<f64>,
}

/// Aggregate edge-server loading per class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub rho: ClassMap<f64>,
}

impl MeanField {
    pub fn new(red: f64, yellow: f64, green: f64) -> Self {
        Self {
            rho: ClassMap::new(red, yellow, green),
        }
    }

    pub fn sup_distance(&self, other: &MeanField) -> f64 {
        TaskClass::ALL
            .iter()
            .map(|&c| (self.rho[c] - other.rho[c]).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AoiBreakdown {
    pub per_class: ClassMap<f64>,
    pub weighted: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn priority_order() {
        assert!(TaskClass::Red > TaskClass::Yellow);
        assert!(TaskClass::Yellow > TaskClass::Green);
        assert_eq!(
            TaskClass::Green.higher(),
            &[TaskClass::Red, TaskClass::Yellow]
        );
        assert!(TaskClass::Red.higher().is_empty());
    }

    fn system(weights: &[f64], n: usize) -> SystemConfig {
        let profile = UeProfile {
            arrival_rates: ClassMap::new(1.0, 3.0, 6.0),
            eta: 1.0,
            f_max: 2.0,
            weight: 1.0,
        };
        SystemConfig {
            num_ues: n,
            es_rate: 10.0,
            scalarization: 10.0,
            aoi_weights: ClassMap::new(20.0, 5.0, 2.0),
            profiles: weights
                .iter()
                .map(|&w| UeProfile {
                    weight: w,
                    ..profile
                })
                .collect(),
        }
    }

    #[test]
    fn type_assignment_by_largest_remainder() {
        assert_eq!(system(&[1.0], 3).assign_types(), vec![0, 0, 0]);
        assert_eq!(system(&[0.5, 0.5], 4).assign_types(), vec![0, 0, 1, 1]);
        assert_eq!(system(&[0.5, 0.5], 3).assign_types(), vec![0, 0, 1]);
        assert_eq!(
            system(&[0.2, 0.8], 10)
                .assign_types()
                .iter()
                .filter(|&&t| t == 1)
                .count(),
            8
        );
    }

    #[test]
    fn serde_uses_lowercase_class_keys() {
        let m: ClassMap<f64> = serde_json::from_str(r#"{"red":1,"yellow":2,"green":3}"#).unwrap();
        assert_eq!(m[TaskClass::Yellow], 2.0);
    }
}
