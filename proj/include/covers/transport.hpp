#pragma once

#include "covers/frame_buffer.hpp"

#include <Eigen/Core>

namespace covers {

class PolicyBundle;

struct TransportPlan {
    Eigen::MatrixXd plan;  // rows sum to 1/n, columns to 1/m
    double cost = 0.0;
    int pivots = 0;
};

// M[i, l] = ||X_i - Y_l||_2 for point clouds stored one point per row.
Eigen::MatrixXd cost_matrix(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

/// Exact optimum of min <P, M> s.t. P 1 = 1/n, P^T 1 = 1/m, P >= 0.
/// Transportation simplex on integer-scaled masses (m units per row, n per
/// column), so feasibility is exact and degenerate pivots are handled by the
/// spanning-tree basis; Bland's rule takes over after a run of degenerate pivots.
TransportPlan solve_transport(const Eigen::MatrixXd& cost);

TransportPlan w1_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y);

// Invariant features of every frame, one row per frame.
Eigen::MatrixXd feature_cloud(const FrameBuffer& frames, const PolicyBundle& bundle);

// W1 between the invariant-feature clouds of two buffers under one bundle's extractor.
double buffer_distance(const FrameBuffer& a, const FrameBuffer& b, const PolicyBundle& bundle);

}  // namespace covers
