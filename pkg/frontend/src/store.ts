/** Session view state as a pure function of the ordered message stream. */

import {
  AgentRecord,
  EntitySets,
  ObjectRecord,
  ReportMessage,
  ServerMessage,
} from "./protocol.js";

export type Phase = "connecting" | "lobby" | "running" | "finished" | "error";

export interface ViewState {
  phase: Phase;
  episode: string;
  instruction: string;
  agent: string;
  role: string;
  entities: EntitySets;
  skills: string[];
  objects: Record<string, ObjectRecord>;
  furnitureOpen: Record<string, boolean>;
  agents: Record<string, AgentRecord>;
  ownLog: string[];
  partnerFeed: string[];
  step: number;
  retriesLeft: number;
  paletteLocked: boolean;
  report: ReportMessage | null;
  error: string | null;
}

export function initialState(): ViewState {
  return {
    phase: "connecting",
    episode: "",
    instruction: "",
    agent: "",
    role: "",
    entities: { objects: [], furniture: [], rooms: [] },
    skills: [],
    objects: {},
    furnitureOpen: {},
    agents: {},
    ownLog: [],
    partnerFeed: [],
    step: 0,
    retriesLeft: 0,
    paletteLocked: false,
    report: null,
    error: null,
  };
}

/** Pure reducer: same stream in, same state out. */
export function reduce(state: ViewState, message: ServerMessage): ViewState {
  const next: ViewState = {
    ...state,
    entities: { ...state.entities },
    objects: { ...state.objects },
    furnitureOpen: { ...state.furnitureOpen },
    agents: { ...state.agents },
    ownLog: [...state.ownLog],
    partnerFeed: [...state.partnerFeed],
  };
  switch (message.kind) {
    case "lobby":
      next.phase = "lobby";
      break;
    case "session_init":
      return {
        ...initialState(),
        phase: "running",
        episode: message.episode,
        instruction: message.instruction,
        agent: message.agent,
        role: message.role,
        entities: message.entities,
        skills: message.skills,
        retriesLeft: message.retries_left,
      };
    case "state_diff":
      next.step = message.step;
      for (const record of message.objects) {
        next.objects[record.name] = record;
        if (!next.entities.objects.includes(record.name)) {
          next.entities.objects = [...next.entities.objects, record.name].sort();
        }
      }
      for (const furniture of message.furniture) {
        next.furnitureOpen[furniture.name] = furniture.open;
      }
      for (const agent of message.agents) {
        next.agents[agent.name] = agent;
      }
      break;
    case "partner_action":
      next.partnerFeed.push(
        `step ${message.step}: ${message.agent} ${message.call} (${message.status})`
      );
      break;
    case "result":
      next.ownLog.push(`${message.call} -> ${message.message}`);
      next.paletteLocked = false;
      if (message.step !== undefined) next.step = message.step;
      break;
    case "report":
      next.phase = "finished";
      next.report = message;
      next.retriesLeft = message.retries_left;
      next.paletteLocked = false;
      break;
    case "error":
      next.error = message.error;
      break;
  }
  return next;
}

export function replay(messages: ServerMessage[]): ViewState {
  return messages.reduce(reduce, initialState());
}

/** Convenience wrapper holding the message log for replay/resume. */
export class SessionStore {
  state: ViewState = initialState();
  log: ServerMessage[] = [];

  apply(message: ServerMessage): ViewState {
    this.log.push(message);
    this.state = reduce(this.state, message);
    return this.state;
  }

  lockPalette(): void {
    this.state = { ...this.state, paletteLocked: true };
  }

  /** Rebuild the view from the recorded stream (reconnect resume). */
  resume(): ViewState {
    this.state = replay(this.log);
    return this.state;
  }
}
