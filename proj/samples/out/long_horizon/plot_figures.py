#!/usr/bin/env python3
# Renders the comparison figures from comparison.csv and planning.csv.
import sys
import pandas as pd
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

d = sys.argv[1] if len(sys.argv) > 1 else "."
cmp = pd.read_csv(f"{d}/comparison.csv")
plan = pd.read_csv(f"{d}/planning.csv")
states = ["AI", "AH", "BI", "BH"]

fig, ax = plt.subplots(3, 1, figsize=(7, 9), sharex=True)
ax[0].plot(cmp.t, cmp.total_infection_intervention, label="intervention")
ax[0].plot(cmp.t, cmp.total_infection_anarchy, label="anarchy")
ax[0].set_ylabel("total infection")
ax[0].legend()
for i, city in enumerate("AB"):
    ax[i + 1].plot(cmp.t, cmp[f"infection_{city}_intervention"], label="intervention")
    ax[i + 1].plot(cmp.t, cmp[f"infection_{city}_anarchy"], label="anarchy")
    ax[i + 1].set_ylabel(f"infection rate in {city}")
ax[-1].set_xlabel("t")
fig.savefig(f"{d}/infection.png", dpi=120)

fig, ax = plt.subplots(2, 2, figsize=(9, 7), sharex=True)
for s, a in zip(states, ax.flat):
    a.plot(cmp.t, cmp[f"effort_{s}_intervention"], label="intervention")
    a.plot(cmp.t, cmp[f"effort_{s}_anarchy"], label="anarchy")
    a.set_title(s)
ax[0, 0].legend()
fig.savefig(f"{d}/effort.png", dpi=120)

fig, ax = plt.subplots(2, 1, figsize=(7, 7), sharex=True)
for col, colour in (("blue", "tab:blue"), ("black", "black"), ("red", "tab:red")):
    ax[0].plot(plan.t, plan[f"population_A_{col}"], color=colour, label=col)
    ax[1].plot(plan.t, plan[f"total_infection_{col}"], color=colour)
ax[0].set_ylabel("population of A")
ax[1].set_ylabel("total infection")
ax[0].legend()
fig.savefig(f"{d}/planning.png", dpi=120)

fig, ax = plt.subplots(2, 2, figsize=(9, 7), sharex=True)
for s, a in zip(states, ax.flat):
    a.plot(plan.t, plan[f"effort_{s}_blue"], color="tab:blue", label="without planning")
    a.plot(plan.t, plan[f"effort_{s}_black"], color="black", label="with planning")
    a.set_title(s)
ax[0, 0].legend()
fig.savefig(f"{d}/planning_effort.png", dpi=120)
