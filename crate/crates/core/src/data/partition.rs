use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// How training data is split across clients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Partition {
    /// Shuffle, then equal contiguous chunks; the remainder goes one extra
    /// sample each to the earliest clients.
    Iid,
    /// Sort by label, cut into `clients * shards_per_client` equal shards
    /// and deal `shards_per_client` random shards to each client.
    LabelShards { shards_per_client: usize },
}

impl Partition {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "iid" {
            return Some(Partition::Iid);
        }
        let n = s.strip_prefix("shards:")?.parse().ok()?;
        (n > 0).then_some(Partition::LabelShards { shards_per_client: n })
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Partition::Iid => f.write_str("iid"),
            Partition::LabelShards { shards_per_client } => write!(f, "shards:{shards_per_client}"),
        }
    }
}

/// Index sets per client. Every sample lands in exactly one client.
pub fn partition_indices(
    data: &Dataset,
    clients: usize,
    mode: Partition,
    stream: &mut RngStream,
) -> Result<Vec<Vec<usize>>> {
    if clients == 0 {
        return Err(Error::invalid("clients_total", "must be positive"));
    }
    let n = data.len();
    match mode {
        Partition::Iid => {
            if clients > n {
                return Err(Error::invalid(
                    "clients_total",
                    format!("{clients} clients but only {n} samples"),
                ));
            }
            let mut order: Vec<usize> = (0..n).collect();
            stream.shuffle(&mut order);
            let (base, extra) = (n / clients, n % clients);
            let mut out = Vec::with_capacity(clients);
            let mut start = 0;
            for c in 0..clients {
                let len = base + usize::from(c < extra);
                out.push(order[start..start + len].to_vec());
                start += len;
            }
            Ok(out)
        }
        Partition::LabelShards { shards_per_client } => {
            let shards = clients * shards_per_client;
            if shards_per_client == 0 || shards > n {
                return Err(Error::invalid(
                    "clients_total",
                    format!("{shards} shards but only {n} samples"),
                ));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&i| (data.label(i), i));
            let size = n / shards;
            let mut shard_ids: Vec<usize> = (0..shards).collect();
            stream.shuffle(&mut shard_ids);
            let shard = |s: usize| {
                let start = s * size;
                // the last shard absorbs the remainder
                let end = if s + 1 == shards { n } else { start + size };
                &order[start..end]
            };
            Ok(shard_ids
                .chunks(shards_per_client)
                .map(|ids| ids.iter().flat_map(|&s| shard(s).iter().copied()).collect())
                .collect())
        }
    }
}

/// Splits `data` into per-client datasets.
pub fn partition_data(data: &Dataset, clients: usize, mode: Partition, stream: &mut RngStream) -> Result<Vec<Dataset>> {
    Ok(partition_indices(data, clients, mode, stream)?
        .iter()
        .map(|idx| data.subset(idx))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;
    use std::collections::HashSet;

    fn labelled(n: usize, classes: u32) -> Dataset {
        let labels: Vec<u32> = (0..n as u32).map(|i| i % classes).collect();
        let features = (0..n).map(|i| i as f32).collect();
        Dataset::new(1, classes as usize, features, labels).unwrap()
    }

    #[test]
    fn iid_equal_split() {
        let data = labelled(60_000, 10);
        let parts = partition_indices(&data, 100, Partition::Iid, &mut derive_stream(0, &[])).unwrap();
        assert!(parts.iter().all(|p| p.len() == 600));
    }

    #[test]
    fn remainder_goes_to_earliest_clients() {
        let data = labelled(10, 2);
        let parts = partition_indices(&data, 3, Partition::Iid, &mut derive_stream(0, &[])).unwrap();
        let sizes: Vec<_> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
    }

    #[test]
    fn partitions_are_disjoint_and_complete() {
        let data = labelled(1003, 10);
        for mode in [Partition::Iid, Partition::LabelShards { shards_per_client: 2 }] {
            let parts = partition_indices(&data, 20, mode, &mut derive_stream(1, &[])).unwrap();
            let all: Vec<usize> = parts.iter().flatten().copied().collect();
            let set: HashSet<_> = all.iter().copied().collect();
            assert_eq!(all.len(), 1003, "{mode}");
            assert_eq!(set.len(), 1003, "{mode}");
        }
    }

    #[test]
    fn shards_limit_label_diversity() {
        let data = labelled(6000, 10);
        let parts = partition_data(
            &data,
            100,
            Partition::LabelShards { shards_per_client: 2 },
            &mut derive_stream(2, &[]),
        )
        .unwrap();
        for p in &parts {
            let labels: HashSet<_> = p.labels().iter().collect();
            assert!(labels.len() <= 2);
        }
    }

    #[test]
    fn too_many_clients() {
        let data = labelled(5, 2);
        assert!(partition_data(&data, 6, Partition::Iid, &mut derive_stream(0, &[])).is_err());
        assert!(partition_data(&data, 0, Partition::Iid, &mut derive_stream(0, &[])).is_err());
    }

    #[test]
    fn parse_modes() {
        assert_eq!(Partition::parse("iid"), Some(Partition::Iid));
        assert_eq!(
            Partition::parse("shards:2"),
            Some(Partition::LabelShards { shards_per_client: 2 })
        );
        assert_eq!(Partition::parse("shards:0"), None);
        assert_eq!(Partition::parse("other"), None);
        assert_eq!(Partition::LabelShards { shards_per_client: 3 }.to_string(), "shards:3");
    }
}
