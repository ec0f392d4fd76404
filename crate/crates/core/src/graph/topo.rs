use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use super::{Graph, GraphError};

/// Node indices in dependency order, ties broken by insertion order.
pub fn topo_order(graph: &Graph) -> Result<Vec<usize>, GraphError> {
    let producers = graph.producer_map();
    let n = graph.nodes.len();
    let mut indegree = vec![0usize; n];
    let mut users: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        for input in &node.inputs {
            if let Some(&p) = producers.get(input.as_str()) {
                indegree[i] += 1;
                users.entry(p).or_default().push(i);
            }
        }
    }

    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &u in users.get(&i).map(Vec::as_slice).unwrap_or_default() {
            indegree[u] -= 1;
            if indegree[u] == 0 {
                ready.push(Reverse(u));
            }
        }
    }

    if order.len() < n {
        let stuck = (0..n)
            .filter(|&i| indegree[i] > 0)
            .map(|i| graph.nodes[i].name.clone())
            .collect();
        return Err(GraphError::Cycle(stuck));
    }
    Ok(order)
}
