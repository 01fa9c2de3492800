/** Wire protocol types (docs/hitl-protocol.md, version 1). */

export const PROTOCOL_VERSION = 1;

export interface EntitySets {
  objects: string[];
  furniture: string[];
  rooms: string[];
}

export interface SessionInitMessage {
  kind: "session_init";
  protocol: number;
  session: number;
  episode: string;
  instruction: string;
  agent: string;
  role: "human" | "robot";
  world: string;
  entities: EntitySets;
  skills: string[];
  retries_left: number;
}

export interface LobbyMessage {
  kind: "lobby";
  waiting_for: string;
}

export interface ObjectRecord {
  name: string;
  category: string;
  parent: string;
  relation: "on" | "within" | "held";
  room: string;
  states: string[];
}

export interface AgentRecord {
  name: string;
  room: string;
  held: string | null;
  position: [number, number];
}

export interface StateDiffMessage {
  kind: "state_diff";
  step: number;
  objects: ObjectRecord[];
  furniture: { name: string; open: boolean }[];
  agents: AgentRecord[];
}

export interface PartnerActionMessage {
  kind: "partner_action";
  step: number;
  agent: string;
  call: string;
  status: "success" | "failure";
}

export interface ResultMessage {
  kind: "result";
  step?: number;
  call: string;
  status: "success" | "failure" | "rejected";
  message: string;
}

export interface ReportMessage {
  kind: "report";
  success: boolean;
  percent_complete: number;
  explanation: string;
  sim_steps: number;
  termination: string;
  retries_left: number;
}

export interface ErrorMessage {
  kind: "error";
  error: string;
}

export type ServerMessage =
  | SessionInitMessage
  | LobbyMessage
  | StateDiffMessage
  | PartnerActionMessage
  | ResultMessage
  | ReportMessage
  | ErrorMessage;

export type ClientMessage =
  | { kind: "hello"; protocol: number }
  | { kind: "command"; text: string }
  | { kind: "retry" }
  | { kind: "bye" };
