/**
 * Agent interface for policies hosted by this adapter, mirroring the
 * primary server's contract: one-time initialize, per-episode reset
 * returning a metadata map, and act mapping an observation to an action.
 */

import { Act, Obs, obsBatchSize, zerosF32 } from "./messages";
import { NdArray, Value, ValueMap, vmap } from "./value";

export abstract class Agent {
  initialize(): void | Promise<void> {}

  reset(_obs: Obs, _instruction: Value, _kwargs: ValueMap): ValueMap | Promise<ValueMap> {
    return new Map();
  }

  abstract act(obs: Obs): Act | Promise<Act>;
}

/** Zero action of the configured dimension; copies the gripper into info.
 * Behaviorally identical to the primary server's echo agent. */
export class EchoAgent extends Agent {
  constructor(public readonly actionDim = 7) {
    super();
  }

  act(obs: Obs): Act {
    const batch = obsBatchSize(obs);
    const action: NdArray =
      batch === undefined ? zerosF32([this.actionDim]) : zerosF32([batch, this.actionDim]);
    const info: ValueMap = new Map();
    if (obs.gripper !== null) {
      info.set("echo_gripper", obs.gripper);
    }
    return { action, done: false, info };
  }
}

export type AgentFactory = () => Agent;

export const BUILTIN_AGENTS: Record<string, (args: Record<string, string>) => Agent> = {
  echo: (args) => new EchoAgent(args.action_dim ? parseInt(args.action_dim, 10) : 7),
};
