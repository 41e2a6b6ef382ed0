use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rdpipe::{ClipMeta, RDClip};

/// Which clips may appear in which partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitProtocol {
    /// Random per-clip split.
    InDomain,
    /// Every clip of `user` is test; the rest is split into train and val.
    LeaveOneUserOut { user: u32 },
    /// `train_locations` feed train and val; `test_location` is test only.
    CrossLocation {
        train_locations: Vec<String>,
        test_location: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub protocol: SplitProtocol,
    /// Train, val and test fractions. For the held-out protocols only the
    /// train:val ratio matters.
    pub fractions: [f64; 3],
    pub rng_seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            protocol: SplitProtocol::InDomain,
            fractions: [0.70, 0.15, 0.15],
            rng_seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let [tr, va, te] = self.fractions;
        if self.fractions.iter().any(|f| !f.is_finite() || *f < 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {:?} must be non-negative and sum to 1",
                self.fractions
            )));
        }
        if tr + va <= 0.0 {
            return Err(Error::Config("split leaves nothing to train on".into()));
        }
        if let SplitProtocol::CrossLocation {
            train_locations,
            test_location,
        } = &self.protocol
        {
            if train_locations.is_empty() || train_locations.contains(test_location) {
                return Err(Error::Config(format!(
                    "test location {test_location:?} must be distinct from a non-empty train set {train_locations:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Clip indices of each partition, ascending. Serializes as the split
/// descriptor, together with the spec that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub spec: SplitSpec,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partitions `clips` per `spec`. Partitions are disjoint and together cover
/// every clip; a store location that a cross-location spec does not mention
/// is rejected rather than silently dropped.
pub fn make_split(clips: &[RDClip], spec: &SplitSpec) -> Result<Split> {
    let metas: Vec<&ClipMeta> = clips.iter().map(|c| &c.meta).collect();
    split_meta(&metas, spec)
}

fn split_meta(metas: &[&ClipMeta], spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let [tr, va, _] = spec.fractions;
    let (pool, test) = match &spec.protocol {
        SplitProtocol::InDomain => {
            let mut idx: Vec<usize> = (0..metas.len()).collect();
            idx.shuffle(&mut rng);
            let n = idx.len();
            let n_train = (n as f64 * tr).round() as usize;
            let n_val = ((n as f64 * va).round() as usize).min(n - n_train);
            let mut train = idx[..n_train].to_vec();
            let mut val = idx[n_train..n_train + n_val].to_vec();
            let mut test = idx[n_train + n_val..].to_vec();
            train.sort_unstable();
            val.sort_unstable();
            test.sort_unstable();
            return Ok(Split {
                spec: spec.clone(),
                train,
                val,
                test,
            });
        }
        SplitProtocol::LeaveOneUserOut { user } => {
            if !metas.iter().any(|m| m.user == *user) {
                return Err(Error::UnknownId(format!("user {user}")));
            }
            (0..metas.len()).partition::<Vec<_>, _>(|&i| metas[i].user != *user)
        }
        SplitProtocol::CrossLocation {
            train_locations,
            test_location,
        } => {
            for loc in train_locations.iter().chain([test_location]) {
                if !metas.iter().any(|m| m.location == *loc) {
                    return Err(Error::UnknownId(format!("location {loc:?}")));
                }
            }
            if let Some(m) = metas
                .iter()
                .find(|m| m.location != *test_location && !train_locations.contains(&m.location))
            {
                return Err(Error::Invalid(format!(
                    "store location {:?} is in neither the train nor the test set",
                    m.location
                )));
            }
            (0..metas.len()).partition::<Vec<_>, _>(|&i| metas[i].location != *test_location)
        }
    };
    let mut pool = pool;
    pool.shuffle(&mut rng);
    let n_train = (pool.len() as f64 * tr / (tr + va)).round() as usize;
    let mut train = pool[..n_train].to_vec();
    let mut val = pool[n_train..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    Ok(Split {
        spec: spec.clone(),
        train,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn metas(n: usize) -> Vec<ClipMeta> {
        (0..n)
            .map(|i| ClipMeta {
                user: (i % 5) as u32 + 1,
                location: ["A", "B", "C"][i % 3].into(),
                source: String::new(),
                start_frame: 0,
            })
            .collect()
    }

    fn split(m: &[ClipMeta], spec: &SplitSpec) -> Result<Split> {
        split_meta(&m.iter().collect::<Vec<_>>(), spec)
    }

    fn check_partition(s: &Split, n: usize) {
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn in_domain_sizes_and_reproducibility() {
        let m = metas(100);
        let spec = SplitSpec {
            rng_seed: 7,
            ..Default::default()
        };
        let a = split(&m, &spec).unwrap();
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (70, 15, 15));
        check_partition(&a, 100);
        assert_eq!(a, split(&m, &spec).unwrap());
        let b = split(&m, &SplitSpec { rng_seed: 8, ..spec }).unwrap();
        assert_ne!(a.test, b.test);
    }

    #[test]
    fn leave_one_user_out_holds_the_user_out() {
        let m = metas(100);
        let spec = SplitSpec {
            protocol: SplitProtocol::LeaveOneUserOut { user: 3 },
            ..Default::default()
        };
        let s = split(&m, &spec).unwrap();
        check_partition(&s, 100);
        assert!(s.train.iter().chain(&s.val).all(|&i| m[i].user != 3));
        assert!(s.test.iter().all(|&i| m[i].user == 3));
        assert_eq!(s.test.len(), 20);
        // 80 remaining clips at 70:15
        assert_eq!((s.train.len(), s.val.len()), (66, 14));
        let bad = SplitSpec {
            protocol: SplitProtocol::LeaveOneUserOut { user: 9 },
            ..Default::default()
        };
        assert!(matches!(split(&m, &bad), Err(Error::UnknownId(_))));
    }

    #[test]
    fn cross_location_tests_only_the_held_location() {
        let m = metas(90);
        let spec = SplitSpec {
            protocol: SplitProtocol::CrossLocation {
                train_locations: vec!["A".into(), "B".into()],
                test_location: "C".into(),
            },
            ..Default::default()
        };
        let s = split(&m, &spec).unwrap();
        check_partition(&s, 90);
        assert!(s.test.iter().all(|&i| m[i].location == "C"));
        assert!(s.train.iter().chain(&s.val).all(|&i| m[i].location != "C"));

        let unknown = SplitSpec {
            protocol: SplitProtocol::CrossLocation {
                train_locations: vec!["A".into(), "B".into()],
                test_location: "Z".into(),
            },
            ..Default::default()
        };
        assert!(matches!(split(&m, &unknown), Err(Error::UnknownId(_))));
        let partial = SplitSpec {
            protocol: SplitProtocol::CrossLocation {
                train_locations: vec!["A".into()],
                test_location: "C".into(),
            },
            ..Default::default()
        };
        assert!(matches!(split(&m, &partial), Err(Error::Invalid(_))));
    }

    #[test]
    fn bad_fractions_are_rejected() {
        let spec = SplitSpec {
            fractions: [0.7, 0.2, 0.2],
            ..Default::default()
        };
        assert!(split(&metas(10), &spec).is_err());
    }

    #[test]
    fn descriptor_json_round_trips() {
        let spec = SplitSpec {
            protocol: SplitProtocol::CrossLocation {
                train_locations: vec!["A".into(), "B".into()],
                test_location: "C".into(),
            },
            ..Default::default()
        };
        let s = split(&metas(30), &spec).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"kind\":\"cross_location\""));
        assert_eq!(serde_json::from_str::<Split>(&json).unwrap(), s);
    }

    proptest! {
        #[test]
        fn partitions_are_disjoint_exhaustive_and_seeded(n in 0usize..200, seed in any::<u64>(), user in 1u32..6) {
            let m = metas(n);
            for protocol in [SplitProtocol::InDomain, SplitProtocol::LeaveOneUserOut { user }] {
                let spec = SplitSpec { protocol, rng_seed: seed, ..Default::default() };
                match split(&m, &spec) {
                    Ok(s) => {
                        check_partition(&s, n);
                        prop_assert_eq!(&s, &split(&m, &spec).unwrap());
                    }
                    Err(Error::UnknownId(_)) => prop_assert!(n < user as usize),
                    Err(e) => panic!("{e}"),
                }
            }
        }
    }
}
