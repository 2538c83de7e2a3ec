use super::{ClientDataset, FlError, Result};
use crate::corpus::{tokenize, Corpus, Vocabulary};
use crate::rng::{domain, hash_bytes, stream};
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;

/// Deals a private corpus out to `n_clients` simulated devices.
///
/// Training units (chat turns, prose sentences) stay grouped by their
/// `conv` metadata so a conversation lives on one device. Groups are
/// shuffled; each client first gets one group, and every remaining group
/// goes, with probability `skew`, to the client chosen by its `topic_key`
/// hash (non-IID topics), otherwise to a uniformly random client.
pub fn partition_private_corpus(
    corpus: &Corpus,
    vocab: &Vocabulary,
    n_clients: usize,
    skew: f64,
    seed: u64,
) -> Result<Vec<ClientDataset>> {
    if n_clients == 0 {
        return Err(FlError::EmptyPopulation);
    }
    let units = corpus.training_units();
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, (String, Vec<usize>)> = BTreeMap::new();
    for (i, ex) in units.iter().enumerate() {
        let key = ex.meta.get("conv").cloned().unwrap_or_else(|| format!("unit-{i}"));
        let topic = ex.meta.get("topic_key").cloned().unwrap_or_else(|| key.clone());
        groups
            .entry(key.clone())
            .or_insert_with(|| {
                order.push(key.clone());
                (topic, Vec::new())
            })
            .1
            .push(i);
    }
    if order.len() < n_clients {
        return Err(FlError::TooFewGroups {
            groups: order.len(),
            clients: n_clients,
        });
    }
    let mut rng = stream(seed, &[domain::PARTITION]);
    order.shuffle(&mut rng);
    let skew = skew.clamp(0.0, 1.0);
    let salt = seed.to_le_bytes();
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for (g, key) in order.iter().enumerate() {
        let (topic, members) = &groups[key];
        let client = if g < n_clients {
            g
        } else if rng.random::<f64>() < skew {
            let mut bytes = topic.as_bytes().to_vec();
            bytes.extend_from_slice(&salt);
            (hash_bytes(&bytes) % n_clients as u64) as usize
        } else {
            rng.random_range(0..n_clients)
        };
        assigned[client].extend(members);
    }
    let all: Vec<_> = units.iter().collect();
    assigned
        .into_iter()
        .enumerate()
        .map(|(c, mut idx)| {
            idx.sort_unstable();
            let examples = idx.iter().map(|&i| tokenize(all[i].text(), vocab)).collect();
            ClientDataset::new(c as u64, examples)
        })
        .collect()
}

/// Splits off the last `n_holdout` clients as an evaluation population.
pub fn split_holdout(mut pop: Vec<ClientDataset>, n_holdout: usize) -> (Vec<ClientDataset>, Vec<ClientDataset>) {
    let keep = pop.len().saturating_sub(n_holdout);
    let holdout = pop.split_off(keep);
    (pop, holdout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, Style};
    use crate::corpus::Source;

    fn private(n: u64) -> Corpus {
        let m = MockBackend::profile(Style::ChatLike, 0.0);
        (0..n).map(|i| m.simulate_document(3, i, Source::PrivateSim)).collect()
    }

    fn vocab(c: &Corpus) -> Vocabulary {
        Vocabulary::build(c.training_units().texts(), 500)
    }

    #[test]
    fn single_client_holds_everything() {
        let c = private(30);
        let v = vocab(&c);
        let pop = partition_private_corpus(&c, &v, 1, 0.5, 1).unwrap();
        assert_eq!(pop.len(), 1);
        assert_eq!(pop[0].examples.len(), c.training_units().len());
    }

    #[test]
    fn union_is_disjoint_cover() {
        let c = private(80);
        let v = vocab(&c);
        let pop = partition_private_corpus(&c, &v, 12, 0.7, 2).unwrap();
        let total: usize = pop.iter().map(|p| p.examples.len()).sum();
        assert_eq!(total, c.training_units().len());
        let mut want: Vec<Vec<u32>> = c.training_units().iter().map(|e| tokenize(e.text(), &v).ids).collect();
        let mut got: Vec<Vec<u32>> = pop.iter().flat_map(|p| p.examples.iter().map(|e| e.ids.clone())).collect();
        want.sort();
        got.sort();
        assert_eq!(want, got);
        assert_eq!(pop, partition_private_corpus(&c, &v, 12, 0.7, 2).unwrap());
    }

    fn unigram(p: &ClientDataset, v: usize) -> Vec<f64> {
        let mut counts = vec![0.0; v];
        let mut n = 0.0;
        for e in &p.examples {
            for &id in &e.ids {
                counts[id as usize] += 1.0;
                n += 1.0;
            }
        }
        counts.iter().map(|c| c / n).collect()
    }

    fn js(p: &[f64], q: &[f64]) -> f64 {
        let kl = |a: &[f64], m: &[f64]| -> f64 {
            a.iter().zip(m).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * (x / y).ln()).sum()
        };
        let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
        (kl(p, &m) + kl(q, &m)) / 2.0
    }

    fn mean_pairwise_js(pop: &[ClientDataset], v: usize) -> f64 {
        let dists: Vec<Vec<f64>> = pop.iter().map(|p| unigram(p, v)).collect();
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..dists.len() {
            for j in i + 1..dists.len() {
                total += js(&dists[i], &dists[j]);
                pairs += 1.0;
            }
        }
        total / pairs
    }

    #[test]
    fn skewed_clients_differ() {
        let c = private(300);
        let v = vocab(&c);
        let skewed = partition_private_corpus(&c, &v, 10, 1.0, 4).unwrap();
        let iid = partition_private_corpus(&c, &v, 10, 0.0, 4).unwrap();
        let (js_skewed, js_iid) = (mean_pairwise_js(&skewed, v.size()), mean_pairwise_js(&iid, v.size()));
        assert!(js_skewed > 0.0);
        assert!(js_skewed > js_iid, "{js_skewed} vs {js_iid}");
    }

    #[test]
    fn too_few_groups() {
        let c = private(3);
        let v = vocab(&c);
        assert!(matches!(
            partition_private_corpus(&c, &v, 5, 0.0, 1),
            Err(FlError::TooFewGroups { groups: 3, clients: 5 })
        ));
    }

    #[test]
    fn holdout_split() {
        let c = private(20);
        let v = vocab(&c);
        let pop = partition_private_corpus(&c, &v, 10, 0.0, 1).unwrap();
        let (train, hold) = split_holdout(pop, 3);
        assert_eq!((train.len(), hold.len()), (7, 3));
        assert_eq!(hold[0].client_id, 7);
    }
}
