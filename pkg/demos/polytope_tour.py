"""Small tour of the polytope kernel: H/V conversion, sums and supports."""

import numpy as np

from lpvtube import HPolytope, VPolytope
from lpvtube.polytope import (affine_image, halfspace_conversion, minkowski_sum, support,
                              vertex_enumeration)

# unit box in the plane, described by inequalities
box = HPolytope(np.vstack([np.eye(2), -np.eye(2)]), np.ones(4))
V = vertex_enumeration(box)
print("box vertices:\n", V.vertices)

# rotate by 30 degrees and add a triangle
c, s = np.cos(np.pi / 6), np.sin(np.pi / 6)
rot = affine_image(V, np.array([[c, -s], [s, c]]))
tri = VPolytope(np.array([[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]]))
msum = minkowski_sum(rot, tri)
H = halfspace_conversion(msum)
print(f"sum has {msum.vertices.shape[0]} vertices and {H.n_rows} facets")

# the support function is additive under Minkowski sums
d = np.array([1.0, 2.0])
print("h_sum(d)        =", support(msum, d))
print("h_rot + h_tri   =", support(rot, d) + support(tri, d))
print("h from H-form   =", support(H, d))
