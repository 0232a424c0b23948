/** Wire types mirroring the rating server's JSON payloads. */

export interface LatLon {
  lat: number;
  lon: number;
}

export type TileStatus = 'pending' | 'rated' | 'geodata_unavailable' | 'rating_unavailable';

export interface TileMsg {
  type: 'tile';
  phase: 'pending' | 'final';
  i: number;
  j: number;
  center: LatLon;
  /** Square corners in SW, SE, NE, NW order, straight from the server. */
  corners: LatLon[];
  status: TileStatus;
  rating: number | null;
  /** "#rrggbb" computed server-side; the client never recomputes colors. */
  color: string | null;
  detail: string;
}

export interface DoneMsg {
  type: 'done';
  count: number;
}

export type StreamMsg = TileMsg | DoneMsg;

export interface SessionInfo {
  session_id: string;
  tile_budget: number;
}

export interface ExplanationMsg {
  i: number;
  j: number;
  rating: number;
  text: string;
  corpus_fetched_at: string;
}

export interface PersonaForm {
  descriptor: string;
  age: number;
  travel_mode: 'solo' | 'group';
}

export interface SessionRequest {
  persona: PersonaForm;
  origin: LatLon;
  side_m?: number;
  radius_m?: number;
  tile_budget?: number;
  local_datetime?: string;
}
