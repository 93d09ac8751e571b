// Wire types for the rating service. Field names follow the JSON payloads
// exactly, so keep these in sync with the service models.

export type Assignment = {
  video_id: string;
  prompt_text: string;
  frame_urls: string[];
  fps: number;
};

export type RatingSubmission = {
  annotator_id: string;
  video_id: string;
  raw_score: number;
};

export type RatingAck = {
  status: string;
  stored: number;
};

export type ProgressReport = {
  total: number;
  rated: number;
  per_annotator: Record<string, number>;
};
