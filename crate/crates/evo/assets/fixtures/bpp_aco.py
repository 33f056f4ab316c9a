def heuristics(demand: np.ndarray, capacity: int) -> np.ndarray:
    n = demand.shape[0]
    demand_normalized = demand / demand.max()
    
    same_bin_penalty = np.abs((capacity - demand[:, None] - demand) / capacity)
    overlap_penalty = (demand[:, None] + demand) / capacity
    
    heuristics = demand_normalized[:, None] + demand_normalized - same_bin_penalty - overlap_penalty
    
    threshold = np.percentile(heuristics, 90)
    heuristics[heuristics < threshold] = 0
    
    return heuristics
