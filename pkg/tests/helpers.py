"""Shared test fixtures: mirrored map construction and latent-vector mirroring."""

import numpy as np

from hstream.features import ANGLE_TRIPLES, NUM_ANGLES
from hstream.pose import PartMaps
from hstream.skeleton import MIRROR_PERM, NUM_JOINTS, default_limb_tree


def edge_mirror_permutation(tree):
    """For each edge index, the index of its left/right-swapped partner.

    Edges whose swapped version is not in the tree (the spine and the stick,
    which stays attached to the same wrist channel) map to themselves.
    """
    edges = list(tree.edges)
    perm = []
    for p, c in edges:
        swapped = (int(MIRROR_PERM[p]), int(MIRROR_PERM[c]))
        perm.append(edges.index(swapped) if swapped in edges else edges.index((p, c)))
    return perm


def mirror_part_maps(maps: PartMaps) -> PartMaps:
    """Column-reverse all maps, swap L/R confidence channels, swap paired PAF
    edges, and negate every PAF x channel."""
    tree = default_limb_tree()
    conf = maps.confidence[:, ::-1, :][:, :, MIRROR_PERM].copy()
    perm = edge_mirror_permutation(tree)
    pafs = np.zeros_like(maps.pafs)
    for e, src in enumerate(perm):
        pafs[:, :, 2 * e] = -maps.pafs[:, ::-1, 2 * src]
        pafs[:, :, 2 * e + 1] = maps.pafs[:, ::-1, 2 * src + 1]
    return PartMaps(confidence=conf, pafs=pafs, stride=maps.stride)


def angle_mirror_permutation():
    """Row permutation of the angle table under the left/right joint swap."""
    triples = list(ANGLE_TRIPLES)
    perm = []
    for a, b, c in triples:
        swapped = (int(MIRROR_PERM[a]), int(MIRROR_PERM[b]), int(MIRROR_PERM[c]))
        if swapped in triples:
            perm.append(triples.index(swapped))
        elif swapped[::-1] in triples:
            perm.append(triples.index(swapped[::-1]))
        else:
            raise AssertionError(f"angle triple {swapped} has no mirror row")
    return perm


def mirror_latent_vector(vec, include_stick=True):
    """Expected latent vector after mirroring the pose: x entries negated and
    L/R coordinate slots swapped, angle rows permuted by the same swap."""
    joints = NUM_JOINTS if include_stick else NUM_JOINTS - 2
    per_frame = 2 * joints + NUM_ANGLES
    vec = np.asarray(vec)
    assert vec.size == 3 * per_frame
    joint_ids = list(range(joints))  # stick rows (16, 17) are self-mirrored
    aperm = angle_mirror_permutation()
    out = np.empty_like(vec)
    for f in range(3):
        base = f * per_frame
        coords = vec[base : base + 2 * joints].reshape(joints, 2)
        swapped = coords[[MIRROR_PERM[j] if MIRROR_PERM[j] < joints else j for j in joint_ids]].copy()
        swapped[:, 0] *= -1.0
        out[base : base + 2 * joints] = swapped.reshape(-1)
        angles = vec[base + 2 * joints : base + per_frame]
        out[base + 2 * joints : base + per_frame] = angles[aperm]
    return out
