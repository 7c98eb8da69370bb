//! Dinic max-flow / min-cut on integer capacities.

use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct FlowGraph {
    head: Vec<u32>,
    next: Vec<u32>,
    to: Vec<u32>,
    cap: Vec<i64>,
}

const NONE: u32 = u32::MAX;

impl FlowGraph {
    pub fn new(nodes: usize) -> Self {
        Self {
            head: vec![NONE; nodes],
            next: Vec::new(),
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    pub fn with_capacity(nodes: usize, edges: usize) -> Self {
        let mut g = Self::new(nodes);
        g.next.reserve(2 * edges);
        g.to.reserve(2 * edges);
        g.cap.reserve(2 * edges);
        g
    }

    pub fn node_count(&self) -> usize {
        self.head.len()
    }

    fn push(&mut self, from: usize, to: usize, cap: i64) {
        let e = self.to.len() as u32;
        self.to.push(to as u32);
        self.cap.push(cap);
        self.next.push(self.head[from]);
        self.head[from] = e;
    }

    /// Directed edge `from -> to` with capacity `cap` (and a zero-capacity reverse).
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64) {
        debug_assert!(cap >= 0);
        self.push(from, to, cap);
        self.push(to, from, 0);
    }

    /// Pair of opposite edges with independent capacities, sharing residuals.
    pub fn add_edge_pair(&mut self, a: usize, b: usize, cap_ab: i64, cap_ba: i64) {
        debug_assert!(cap_ab >= 0 && cap_ba >= 0);
        self.push(a, b, cap_ab);
        self.push(b, a, cap_ba);
    }

    fn bfs(&self, s: usize, t: usize, level: &mut [i32]) -> bool {
        level.fill(-1);
        level[s] = 0;
        let mut q = VecDeque::new();
        q.push_back(s);
        while let Some(u) = q.pop_front() {
            let mut e = self.head[u];
            while e != NONE {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && level[v] < 0 {
                    level[v] = level[u] + 1;
                    q.push_back(v);
                }
                e = self.next[e as usize];
            }
        }
        level[t] >= 0
    }

    /// Push a blocking flow along level-increasing paths; iterative to handle
    /// long augmenting paths.
    fn blocking_flow(&mut self, s: usize, t: usize, level: &mut [i32], iter: &mut [u32]) -> i64 {
        let mut total = 0i64;
        let mut path: Vec<u32> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let bottleneck = path.iter().map(|&e| self.cap[e as usize]).min().unwrap_or(0);
                for &e in &path {
                    self.cap[e as usize] -= bottleneck;
                    self.cap[(e ^ 1) as usize] += bottleneck;
                }
                total += bottleneck;
                path.clear();
                u = s;
                continue;
            }
            let mut advanced = false;
            while iter[u] != NONE {
                let e = iter[u] as usize;
                let v = self.to[e] as usize;
                if self.cap[e] > 0 && level[v] == level[u] + 1 {
                    path.push(e as u32);
                    u = v;
                    advanced = true;
                    break;
                }
                iter[u] = self.next[e];
            }
            if advanced {
                continue;
            }
            // dead end: retreat
            level[u] = -1;
            match path.pop() {
                None => return total,
                Some(e) => {
                    u = self.to[(e ^ 1) as usize] as usize;
                    iter[u] = self.next[e as usize];
                }
            }
        }
    }

    /// Maximum flow from `s` to `t`; the graph keeps the residual capacities.
    pub fn max_flow(&mut self, s: usize, t: usize) -> i64 {
        assert_ne!(s, t);
        let n = self.node_count();
        let mut level = vec![-1i32; n];
        let mut iter = vec![NONE; n];
        let mut flow = 0;
        while self.bfs(s, t, &mut level) {
            iter.copy_from_slice(&self.head);
            flow += self.blocking_flow(s, t, &mut level, &mut iter);
        }
        flow
    }

    /// Nodes reachable from `s` in the residual graph (the source side of a min cut).
    pub fn source_side(&self, s: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        seen[s] = true;
        let mut stack = vec![s];
        while let Some(u) = stack.pop() {
            let mut e = self.head[u];
            while e != NONE {
                let v = self.to[e as usize] as usize;
                if self.cap[e as usize] > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
                e = self.next[e as usize];
            }
        }
        seen
    }
}
