//! Dinic's max-flow over real capacities.

use std::collections::VecDeque;

pub(crate) struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
    initial: Vec<f64>,
    eps: f64,
}

impl FlowNetwork {
    /// `eps` is the residual capacity below which an edge counts as saturated.
    pub fn new(nodes: usize, eps: f64) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); nodes],
            to: Vec::new(),
            cap: Vec::new(),
            initial: Vec::new(),
            eps,
        }
    }

    /// Adds `u → v` with capacity `c` and returns the edge id.
    pub fn add_edge(&mut self, u: usize, v: usize, c: f64) -> usize {
        let id = self.to.len();
        self.adj[u].push(id);
        self.to.push(v);
        self.cap.push(c);
        self.initial.push(c);
        self.adj[v].push(id + 1);
        self.to.push(u);
        self.cap.push(0.0);
        self.initial.push(0.0);
        id
    }

    pub fn flow_on(&self, edge: usize) -> f64 {
        (self.initial[edge] - self.cap[edge]).max(0.0)
    }

    pub fn max_flow(&mut self, source: usize, sink: usize) -> f64 {
        let nodes = self.adj.len();
        let mut total = 0.0;
        let mut level = vec![usize::MAX; nodes];
        let mut next = vec![0usize; nodes];
        loop {
            level.iter_mut().for_each(|l| *l = usize::MAX);
            level[source] = 0;
            let mut queue = VecDeque::from([source]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.to[e];
                    if self.cap[e] > self.eps && level[v] == usize::MAX {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[sink] == usize::MAX {
                return total;
            }
            next.iter_mut().for_each(|k| *k = 0);
            loop {
                let pushed = self.augment(source, sink, f64::INFINITY, &level, &mut next);
                if pushed <= self.eps {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn augment(
        &mut self,
        u: usize,
        sink: usize,
        limit: f64,
        level: &[usize],
        next: &mut [usize],
    ) -> f64 {
        if u == sink {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let v = self.to[e];
            if self.cap[e] > self.eps && level[v] == level[u] + 1 {
                let pushed = self.augment(v, sink, limit.min(self.cap[e]), level, next);
                if pushed > self.eps {
                    self.cap[e] -= pushed;
                    self.cap[e ^ 1] += pushed;
                    return pushed;
                }
            }
            next[u] += 1;
        }
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_network() {
        // CLRS figure 26.1, max flow 23
        let mut g = FlowNetwork::new(6, 1e-12);
        let edges = [
            (0, 1, 16.0),
            (0, 2, 13.0),
            (2, 1, 4.0),
            (1, 3, 12.0),
            (3, 2, 9.0),
            (2, 4, 14.0),
            (4, 3, 7.0),
            (3, 5, 20.0),
            (4, 5, 4.0),
        ];
        for (u, v, c) in edges {
            g.add_edge(u, v, c);
        }
        assert!((g.max_flow(0, 5) - 23.0).abs() < 1e-9);
    }

    #[test]
    fn bipartite_transport_reports_edge_flows() {
        // source 0, buyers 1..=2, items 3..=4, sink 5
        let mut g = FlowNetwork::new(6, 1e-12);
        g.add_edge(0, 1, 1.0);
        g.add_edge(0, 2, 1.0);
        let a = g.add_edge(1, 3, 10.0);
        let b = g.add_edge(2, 3, 10.0);
        let c = g.add_edge(2, 4, 10.0);
        g.add_edge(3, 5, 1.5);
        g.add_edge(4, 5, 0.5);
        assert!((g.max_flow(0, 5) - 2.0).abs() < 1e-12);
        assert!((g.flow_on(a) + g.flow_on(b) - 1.5).abs() < 1e-12);
        assert!((g.flow_on(c) - 0.5).abs() < 1e-12);
    }
}
