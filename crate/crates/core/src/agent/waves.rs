use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Display;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task<T> {
    pub id: T,
    pub deps: Vec<T>,
}

impl<T> Task<T> {
    pub fn new(id: T, deps: Vec<T>) -> Self {
        Task { id, deps }
    }
}

/// Groups tasks into waves: a task lands in the wave after its latest
/// dependency, so each wave holds mutually independent tasks and the number
/// of waves equals the longest dependency chain. Waves are sorted by id.
pub fn plan_waves<T: Ord + Clone + Display>(tasks: &[Task<T>]) -> Result<Vec<Vec<T>>> {
    let mut index = BTreeMap::new();
    for (i, t) in tasks.iter().enumerate() {
        if index.insert(&t.id, i).is_some() {
            return Err(Error::DuplicateTask(t.id.to_string()));
        }
    }

    let mut indegree = vec![0usize; tasks.len()];
    let mut dependents = vec![Vec::new(); tasks.len()];
    for (i, t) in tasks.iter().enumerate() {
        for d in &t.deps {
            let &j = index.get(d).ok_or_else(|| Error::UnknownDependency {
                task: t.id.to_string(),
                dependency: d.to_string(),
            })?;
            indegree[i] += 1;
            dependents[j].push(i);
        }
    }

    let mut level = vec![0usize; tasks.len()];
    let mut ready: VecDeque<usize> = (0..tasks.len()).filter(|&i| indegree[i] == 0).collect();
    let mut placed = 0;
    while let Some(i) = ready.pop_front() {
        placed += 1;
        for &k in &dependents[i] {
            level[k] = level[k].max(level[i] + 1);
            indegree[k] -= 1;
            if indegree[k] == 0 {
                ready.push_back(k);
            }
        }
    }
    if placed < tasks.len() {
        let mut stuck: Vec<_> = (0..tasks.len()).filter(|&i| indegree[i] > 0).map(|i| tasks[i].id.to_string()).collect();
        stuck.sort();
        return Err(Error::CyclicDependency(stuck));
    }

    let depth = level.iter().max().map_or(0, |m| m + 1);
    let mut waves = vec![Vec::new(); depth];
    for (i, t) in tasks.iter().enumerate() {
        waves[level[i]].push(t.id.clone());
    }
    for w in &mut waves {
        w.sort();
    }
    Ok(waves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;

    fn t(id: &str, deps: &[&str]) -> Task<String> {
        Task::new(id.into(), deps.iter().map(|d| String::from(*d)).collect())
    }

    #[test]
    fn independent_synthesis_runs_in_one_wave() {
        let waves = plan_waves(&[t("build", &[]), t("test-design", &[])]).unwrap();
        assert_eq!(waves, vec![vec![String::from("build"), String::from("test-design")]]);
    }

    #[test]
    fn chain_needs_one_wave_per_link() {
        let waves = plan_waves(&[t("c", &["b"]), t("b", &["a"]), t("a", &[])]).unwrap();
        assert_eq!(waves.len(), 3);
        assert_eq!(waves[2], vec![String::from("c")]);
    }

    #[test]
    fn empty_input() {
        assert!(plan_waves::<String>(&[]).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        assert!(matches!(plan_waves(&[t("a", &["b"]), t("b", &["a"]), t("c", &[])]), Err(Error::CyclicDependency(v)) if v == ["a", "b"]));
        assert!(matches!(plan_waves(&[t("a", &["zz"])]), Err(Error::UnknownDependency { .. })));
        assert!(matches!(plan_waves(&[t("a", &[]), t("a", &[])]), Err(Error::DuplicateTask(_))));
        assert!(matches!(plan_waves(&[t("a", &["a"])]), Err(Error::CyclicDependency(_))));
    }
}
