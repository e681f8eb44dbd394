//! Skeleton topologies: joint names, parent links, torso seed set, assembly
//! order and the part list scored by PCP.
//!
//! Body joints follow the 17-keypoint COCO ordering. `body13` is the
//! evaluation subset (eyes and ears dropped), `wholebody133` appends 6 foot,
//! 68 face and 2×21 hand keypoints in COCO-WholeBody order.

use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};

pub type JointId = usize;

/// Keypoint family, used for per-group error breakdown and for the tighter
/// assembly distance applied to face and hand points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JointGroup {
    Body,
    Foot,
    Face,
    Hand,
}

impl JointGroup {
    /// Face and hand points sit close to their anchor and use the fine
    /// limb-distance threshold during assembly.
    pub fn is_fine(self) -> bool {
        matches!(self, JointGroup::Face | JointGroup::Hand)
    }
}

/// What the 13th body13 joint is called. Both map to the COCO nose slot of
/// the 2D input; only the name differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadJoint {
    #[default]
    Nose,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonDef {
    name: String,
    joint_names: Vec<String>,
    parent_of: Vec<JointId>,
    groups: Vec<JointGroup>,
    torso_joints: Vec<JointId>,
    limb_chains: Vec<(JointId, JointId)>,
    pcp_parts: Vec<(JointId, JointId)>,
}

/// Indices of the body13 joints within the COCO-17 ordering.
pub const COCO17_TO_BODY13: [usize; 13] = [0, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16];

const COCO17_NAMES: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

// nose hangs off the left shoulder; eyes off the nose, ears off the eyes
const COCO17_PARENTS: [usize; 17] = [5, 0, 0, 1, 2, 5, 6, 5, 6, 7, 8, 11, 12, 11, 12, 13, 14];
const COCO17_TORSO: [usize; 4] = [5, 6, 11, 12];

// arms, legs, outer torso, shoulder-nose (COCO-17 indices)
const COCO17_PCP: [(usize, usize); 14] = [
    (5, 7),
    (7, 9),
    (6, 8),
    (8, 10),
    (11, 13),
    (13, 15),
    (12, 14),
    (14, 16),
    (5, 11),
    (6, 12),
    (5, 6),
    (11, 12),
    (5, 0),
    (6, 0),
];

const FOOT_NAMES: [&str; 6] = [
    "left_big_toe",
    "left_small_toe",
    "left_heel",
    "right_big_toe",
    "right_small_toe",
    "right_heel",
];

const FINGERS: [&str; 5] = ["thumb", "forefinger", "middle_finger", "ring_finger", "pinky_finger"];

pub const FACE_KEYPOINTS: usize = 68;
pub const HAND_KEYPOINTS: usize = 21;

impl SkeletonDef {
    /// Builds a skeleton and derives the center-outward assembly order.
    ///
    /// Torso joints must be their own parent; every other joint must reach a
    /// torso joint by following parents.
    pub fn new(
        name: impl Into<String>,
        joint_names: Vec<String>,
        parent_of: Vec<JointId>,
        groups: Vec<JointGroup>,
        torso_joints: Vec<JointId>,
        pcp_parts: Vec<(JointId, JointId)>,
    ) -> Result<Self> {
        let n = joint_names.len();
        let bad = |msg: String| Error::InvalidInput(format!("skeleton: {msg}"));
        if n == 0 {
            return Err(bad("no joints".into()));
        }
        if parent_of.len() != n || groups.len() != n {
            return Err(bad("parent/group table length differs from joint count".into()));
        }
        let mut seen = HashSet::new();
        for name in &joint_names {
            if !seen.insert(name.as_str()) {
                return Err(bad(format!("duplicate joint name {name:?}")));
            }
        }
        if torso_joints.is_empty() {
            return Err(bad("empty torso set".into()));
        }
        let torso: HashSet<_> = torso_joints.iter().copied().collect();
        for (j, &p) in parent_of.iter().enumerate() {
            if p >= n {
                return Err(bad(format!("parent of joint {j} out of range")));
            }
            if torso.contains(&j) != (p == j) {
                return Err(bad(format!(
                    "joint {j}: only torso joints may be roots (parent = self)"
                )));
            }
        }
        if torso_joints.iter().any(|&j| j >= n) {
            return Err(bad("torso joint out of range".into()));
        }
        for &(a, b) in &pcp_parts {
            if a >= n || b >= n || a == b {
                return Err(bad(format!("invalid PCP part ({a}, {b})")));
            }
        }

        let mut children = vec![Vec::new(); n];
        for (j, &p) in parent_of.iter().enumerate() {
            if p != j {
                children[p].push(j);
            }
        }
        let mut limb_chains = Vec::with_capacity(n);
        let mut visited = vec![false; n];
        let mut queue: VecDeque<JointId> = torso_joints.iter().copied().collect();
        for &t in &torso_joints {
            visited[t] = true;
        }
        while let Some(j) = queue.pop_front() {
            for &c in &children[j] {
                if !visited[c] {
                    visited[c] = true;
                    limb_chains.push((j, c));
                    queue.push_back(c);
                }
            }
        }
        if let Some(j) = visited.iter().position(|v| !v) {
            return Err(bad(format!(
                "joint {:?} is not reachable from the torso",
                joint_names[j]
            )));
        }

        Ok(Self {
            name: name.into(),
            joint_names,
            parent_of,
            groups,
            torso_joints,
            limb_chains,
            pcp_parts,
        })
    }

    /// Looks up one of the shipped skeletons: `body13`, `coco17` or
    /// `wholebody133`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "body13" => Ok(Self::body13()),
            "coco17" => Ok(Self::coco17()),
            "wholebody133" => Ok(Self::wholebody133()),
            other => Err(Error::UnknownSkeleton(other.to_string())),
        }
    }

    pub fn coco17() -> Self {
        let names = COCO17_NAMES.iter().map(|s| s.to_string()).collect();
        Self::new(
            "coco17",
            names,
            COCO17_PARENTS.to_vec(),
            vec![JointGroup::Body; 17],
            COCO17_TORSO.to_vec(),
            COCO17_PCP.to_vec(),
        )
        .expect("coco17 topology is valid")
    }

    pub fn body13() -> Self {
        Self::body13_with_head(HeadJoint::Nose)
    }

    pub fn body13_with_head(head: HeadJoint) -> Self {
        let mut to_local = [usize::MAX; 17];
        for (local, &coco) in COCO17_TO_BODY13.iter().enumerate() {
            to_local[coco] = local;
        }
        let mut names: Vec<String> = COCO17_TO_BODY13
            .iter()
            .map(|&c| COCO17_NAMES[c].to_string())
            .collect();
        if head == HeadJoint::Head {
            names[0] = "head".into();
        }
        let parents = COCO17_TO_BODY13
            .iter()
            .map(|&c| to_local[COCO17_PARENTS[c]])
            .collect();
        let torso = COCO17_TORSO.iter().map(|&c| to_local[c]).collect();
        let pcp = COCO17_PCP
            .iter()
            .map(|&(a, b)| (to_local[a], to_local[b]))
            .collect();
        Self::new("body13", names, parents, vec![JointGroup::Body; 13], torso, pcp)
            .expect("body13 topology is valid")
    }

    /// 17 body + 6 foot + 68 face + 42 hand keypoints.
    ///
    /// Face points anchor to the nose, foot points to their ankle, each hand
    /// root to its wrist and every finger chains outward from the hand root.
    pub fn wholebody133() -> Self {
        let mut names: Vec<String> = COCO17_NAMES.iter().map(|s| s.to_string()).collect();
        let mut parents = COCO17_PARENTS.to_vec();
        let mut groups = vec![JointGroup::Body; 17];

        for (i, foot) in FOOT_NAMES.iter().enumerate() {
            names.push(foot.to_string());
            parents.push(if i < 3 { 15 } else { 16 });
            groups.push(JointGroup::Foot);
        }
        for i in 0..FACE_KEYPOINTS {
            names.push(format!("face_{i}"));
            parents.push(0);
            groups.push(JointGroup::Face);
        }
        for (side, wrist) in [("left", 9usize), ("right", 10usize)] {
            let root = names.len();
            names.push(format!("{side}_hand_root"));
            parents.push(wrist);
            groups.push(JointGroup::Hand);
            for finger in FINGERS {
                let mut prev = root;
                for k in 1..=4 {
                    names.push(format!("{side}_{finger}{k}"));
                    parents.push(prev);
                    groups.push(JointGroup::Hand);
                    prev = names.len() - 1;
                }
            }
        }
        Self::new(
            "wholebody133",
            names,
            parents,
            groups,
            COCO17_TORSO.to_vec(),
            COCO17_PCP.to_vec(),
        )
        .expect("wholebody133 topology is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<JointId> {
        self.joint_names.iter().position(|n| n == name)
    }

    /// Parent joint; torso joints are their own parent.
    pub fn parent_of(&self, joint: JointId) -> JointId {
        self.parent_of[joint]
    }

    pub fn group(&self, joint: JointId) -> JointGroup {
        self.groups[joint]
    }

    pub fn groups(&self) -> &[JointGroup] {
        &self.groups
    }

    pub fn joints_in(&self, group: JointGroup) -> impl Iterator<Item = JointId> + '_ {
        self.groups
            .iter()
            .enumerate()
            .filter(move |(_, g)| **g == group)
            .map(|(j, _)| j)
    }

    pub fn torso_joints(&self) -> &[JointId] {
        &self.torso_joints
    }

    pub fn is_torso(&self, joint: JointId) -> bool {
        self.torso_joints.contains(&joint)
    }

    /// Parent→child edges in breadth-first order from the torso.
    pub fn limb_chains(&self) -> &[(JointId, JointId)] {
        &self.limb_chains
    }

    pub fn pcp_parts(&self) -> &[(JointId, JointId)] {
        &self.pcp_parts
    }

    /// Non-root parent edges, e.g. for drawing.
    pub fn bones(&self) -> impl Iterator<Item = (JointId, JointId)> + '_ {
        self.parent_of
            .iter()
            .enumerate()
            .filter(|(j, p)| *j != **p)
            .map(|(j, &p)| (p, j))
    }
}
